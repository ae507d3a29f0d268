"""Battery-aware (non-myopic) power allocation for interference networks.

A classical WMMSE solver gives the instantaneous allocation ``p_bar``; a
graph-convolutional actor trained with TD3 scales it per transmitter so a
finite battery budget is spent where it pays off over the episode.
"""
from .config import NetConfig, RunConfig, TrainConfig, EvalConfig, load_config, config_hash
from .env import EnvConfig, BatteryEnv, battery_step, rate, sum_rate
from .network import TopologyConfig, sample_episode, sample_topology
from .wmmse import WmmseConfig, wmmse_solve
from .policy import Actor, Critic
from .td3 import TD3Agent, train
from .evaluation import compare, sweep_lengths, scale_histogram

__version__ = "0.1.0"
