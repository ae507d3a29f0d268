"""Run configuration: nested dataclasses loaded from / dumped to YAML."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import yaml

from .env import EnvConfig
from .network import TopologyConfig
from .wmmse import WmmseConfig

__all__ = [
    "NetConfig",
    "TrainConfig",
    "EvalConfig",
    "RunConfig",
    "ConfigError",
    "load_config",
    "dump_config",
    "config_hash",
]


NODE_FEATURES = ("rate", "p_bar", "headroom")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class NetConfig:
    hidden: int = 32
    orders: int = 3
    leaky_slope: float = 0.01
    bias: bool = True
    normalize_battery: bool = False
    channel_gain: float = 1.0
    # extra per-node inputs beyond the battery: "rate" (achievable rate of the
    # lower-level allocation), "p_bar" (the allocation itself) and "headroom"
    # ((b - alpha) / p_bar, the largest scale that cannot violate, clipped)
    extra_features: List[str] = field(default_factory=list)

    def __post_init__(self):
        object.__setattr__(self, "extra_features", list(self.extra_features))
        bad = set(self.extra_features) - set(NODE_FEATURES)
        if bad:
            raise ValueError(f"unknown extra_features {sorted(bad)}; choose from {NODE_FEATURES}")
        if self.hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {self.hidden}")
        if self.orders < 1:
            raise ValueError(f"orders must be >= 1, got {self.orders}")
        if not self.channel_gain > 0:
            raise ValueError(f"channel_gain must be > 0, got {self.channel_gain}")


@dataclass(frozen=True)
class TrainConfig:
    actor_lr: float = 5e-4
    critic_lr: float = 1e-3
    polyak_tau: float = 1e-3
    batch_size: int = 32
    buffer_size: int = 100_000
    policy_delay: int = 2
    target_noise_std: float = 0.2
    target_noise_clip: float = 0.5
    exploration_noise: float = 0.1
    warmup_steps: int = 1000
    max_episodes: int = 10_000
    eval_interval: int = 100
    eval_episodes: int = 5
    patience: int = 20
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    reward_scale: float = 1.0
    checkpoint_interval: int = 500
    # best-checkpoint feasibility bound on validation violations per transmitter
    max_violations: float = 0.0

    def __post_init__(self):
        for name in ("actor_lr", "critic_lr", "polyak_tau", "batch_size", "buffer_size",
                     "policy_delay", "eval_interval", "eval_episodes", "patience", "reward_scale",
                     "checkpoint_interval"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.polyak_tau > 1:
            raise ValueError(f"polyak_tau must be <= 1, got {self.polyak_tau}")
        for name in ("target_noise_std", "target_noise_clip", "exploration_noise",
                     "warmup_steps", "max_episodes", "max_violations"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 10
    lengths: List[int] = field(default_factory=lambda: [30, 60, 100, 150])
    hist_bins: int = 20

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError(f"episodes must be >= 0, got {self.episodes}")
        if any(int(t) < 1 for t in self.lengths):
            raise ValueError(f"lengths must all be >= 1, got {self.lengths}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    wmmse: WmmseConfig = field(default_factory=WmmseConfig)
    network: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.wmmse.P_max != self.env.P_max:
            raise ConfigError(f"wmmse.P_max ({self.wmmse.P_max}) must equal env.P_max ({self.env.P_max})")
        if self.wmmse.sigma_N != self.env.sigma_N:
            raise ConfigError(f"wmmse.sigma_N ({self.wmmse.sigma_N}) must equal env.sigma_N ({self.env.sigma_N})")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **sections) -> "RunConfig":
        return dataclasses.replace(self, **sections)

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "RunConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        env = _section("env", EnvConfig, data.get("env"))
        wm = dict(data.get("wmmse") or {})
        # the solver inherits the environment's power box and noise unless set
        wm.setdefault("P_max", env.P_max)
        wm.setdefault("sigma_N", env.sigma_N)
        return cls(
            seed=int(data.get("seed", 0)),
            topology=_section("topology", TopologyConfig, data.get("topology")),
            env=env,
            wmmse=_section("wmmse", WmmseConfig, wm),
            network=_section("network", NetConfig, data.get("network")),
            train=_section("train", TrainConfig, data.get("train")),
            eval=_section("eval", EvalConfig, data.get("eval")),
            output_dir=data.get("output_dir"),
        )


def _section(name, cls, values):
    values = dict(values or {})
    allowed = {f.name: f for f in fields(cls)}
    for key in values:
        if key not in allowed:
            raise ConfigError(f"unknown field {name}.{key}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name} section: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    data = yaml.safe_load(path.read_text())
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return RunConfig.from_dict(data)


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 over everything that shapes a trained model.

    Evaluation settings, paths and the episode cap are excluded, so a run can
    be extended with more episodes and still match its checkpoints.
    """
    d = cfg.to_dict()
    d.pop("eval")
    d.pop("output_dir")
    d["train"].pop("max_episodes")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
