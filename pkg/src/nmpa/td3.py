"""TD3 training of the scale actor against twin GCNN critics."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import rng as rngmod
from .config import RunConfig, TrainConfig, config_hash
from .env import battery_step, rate, sample_budget
from .network import sample_episode
from .policy import Actor, Critic, prepare_graph, save_checkpoint, load_checkpoint
from .wmmse import wmmse_solve

log = logging.getLogger(__name__)

__all__ = [
    "TrainingDivergenceError",
    "ReplayBuffer",
    "Adam",
    "TD3Agent",
    "TrainingReport",
    "train",
    "polyak_update",
]


class TrainingDivergenceError(FloatingPointError):
    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite {what} at update step {step}")
        self.step = step


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions stored column-wise."""

    def __init__(self, capacity: int, M: int, rng: np.random.Generator):
        self.capacity = int(capacity)
        self.M = M
        self.rng = rng
        n = self.capacity
        self.b = np.zeros((n, M))
        self.H = np.zeros((n, M, M))
        self.p_bar = np.zeros((n, M))
        self.c_bar = np.zeros((n, M))
        self.a = np.zeros((n, M))
        self.r = np.zeros(n)
        self.b2 = np.zeros((n, M))
        self.H2 = np.zeros((n, M, M))
        self.p_bar2 = np.zeros((n, M))
        self.c_bar2 = np.zeros((n, M))
        self.done = np.zeros(n)
        self.ptr = 0
        self.size = 0
        self.inserted = 0

    def __len__(self) -> int:
        return self.size

    def add(self, b, H, p_bar, a, r, b2, H2, p_bar2, done, c_bar=0.0, c_bar2=0.0) -> None:
        """Store one transition; ``c_bar`` is the achievable rate of ``p_bar``."""
        i = self.ptr
        self.b[i], self.H[i], self.p_bar[i], self.c_bar[i], self.a[i] = b, H, p_bar, c_bar, a
        self.r[i] = r
        self.b2[i], self.H2[i], self.p_bar2[i], self.c_bar2[i] = b2, H2, p_bar2, c_bar2
        self.done[i] = float(done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.inserted += 1

    def sample(self, batch_size: int) -> Dict[str, np.ndarray]:
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} from {self.size} transitions")
        idx = self.rng.choice(self.size, size=batch_size, replace=False)
        return {k: getattr(self, k)[idx] for k in
                ("b", "H", "p_bar", "c_bar", "a", "r", "b2", "H2", "p_bar2", "c_bar2", "done")}


class Adam:
    def __init__(self, params: List[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: List[np.ndarray]) -> None:
        """In-place descent step on ``params``."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self, prefix: str) -> Dict[str, np.ndarray]:
        out = {f"{prefix}/t": np.array(self.t)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}/m{i}"] = m.copy()
            out[f"{prefix}/v{i}"] = v.copy()
        return out

    def load_state(self, tensors: Dict[str, np.ndarray], prefix: str) -> None:
        self.t = int(tensors[f"{prefix}/t"])
        for i in range(len(self.m)):
            self.m[i][...] = tensors[f"{prefix}/m{i}"]
            self.v[i][...] = tensors[f"{prefix}/v{i}"]


def polyak_update(target, online, tau: float) -> None:
    for t, s in zip(target.arrays(), online.arrays()):
        t[...] = tau * s + (1.0 - tau) * t


def _check(x, step, what):
    if not np.all(np.isfinite(x)):
        raise TrainingDivergenceError(step, what)


class TD3Agent:
    """Actor, twin critics, their targets and optimizers."""

    def __init__(self, actor: Actor, critic1: Critic, critic2: Critic, cfg: TrainConfig,
                 gamma: float, rng: np.random.Generator):
        self.actor = actor
        self.critic1 = critic1
        self.critic2 = critic2
        self.actor_target = actor.copy()
        self.critic1_target = critic1.copy()
        self.critic2_target = critic2.copy()
        self.cfg = cfg
        self.gamma = gamma
        self.rng = rng
        opt = dict(beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
        self.actor_opt = Adam(actor.arrays(), cfg.actor_lr, **opt)
        self.critic1_opt = Adam(critic1.arrays(), cfg.critic_lr, **opt)
        self.critic2_opt = Adam(critic2.arrays(), cfg.critic_lr, **opt)
        self.updates = 0

    @classmethod
    def create(cls, run: RunConfig, init_rng, noise_rng) -> "TD3Agent":
        net, B_max, alpha = run.network, run.env.B_max, run.env.alpha
        actor = Actor.create(net, B_max, init_rng, alpha)
        c1 = Critic.create(net, B_max, init_rng, alpha)
        c2 = Critic.create(net, B_max, init_rng, alpha)
        return cls(actor, c1, c2, run.train, run.env.gamma, noise_rng)

    @property
    def nets(self) -> Dict[str, object]:
        return {
            "actor": self.actor, "critic1": self.critic1, "critic2": self.critic2,
            "actor_target": self.actor_target, "critic1_target": self.critic1_target,
            "critic2_target": self.critic2_target,
        }

    def optimizer_state(self) -> Dict[str, np.ndarray]:
        return {**self.actor_opt.state("opt_actor"), **self.critic1_opt.state("opt_critic1"),
                **self.critic2_opt.state("opt_critic2"), "updates": np.array(self.updates)}

    def td_target(self, batch, powers2=None) -> np.ndarray:
        cfg = self.cfg
        if powers2 is None:
            powers2 = prepare_graph(batch["H2"], self.actor.net)
        s2 = dict(p_bar=batch["p_bar2"], c_bar=batch["c_bar2"])
        a2 = self.actor_target.scale(batch["b2"], powers=powers2, **s2)
        if cfg.target_noise_std > 0:
            eps = self.rng.normal(0.0, cfg.target_noise_std, size=a2.shape)
            a2 = a2 + np.clip(eps, -cfg.target_noise_clip, cfg.target_noise_clip)
        a2 = np.clip(a2, 0.0, 1.0)
        q1 = self.critic1_target.value(batch["b2"], None, a2, powers=powers2, **s2)
        q2 = self.critic2_target.value(batch["b2"], None, a2, powers=powers2, **s2)
        r = batch["r"] * cfg.reward_scale
        return r + self.gamma * (1.0 - batch["done"]) * np.minimum(q1, q2)

    def critic_update(self, batch, powers=None, powers2=None):
        """One descent step of both critics on the mean squared TD error."""
        if powers is None:
            powers = prepare_graph(batch["H"], self.actor.net)
        y = self.td_target(batch, powers2)
        losses = []
        for critic, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            q, cache = critic.forward(batch["b"], batch["a"], powers=powers, p_bar=batch["p_bar"],
                                      c_bar=batch["c_bar"])
            err = q - y
            loss = float(np.mean(err ** 2))
            _check(loss, self.updates, "critic loss")
            grads, _ = critic.backward(cache, 2.0 * err / err.size)
            opt.step(grads)
            losses.append(loss)
        self.updates += 1
        return losses[0], losses[1]

    def actor_update(self, batch, powers=None) -> float:
        """Ascent on mean Q1(s, mu(s)), then Polyak-average all three targets."""
        if powers is None:
            powers = prepare_graph(batch["H"], self.actor.net)
        s = dict(p_bar=batch["p_bar"], c_bar=batch["c_bar"])
        a, acache = self.actor.forward(batch["b"], powers=powers, **s)
        q, ccache = self.critic1.forward(batch["b"], a, powers=powers, **s)
        loss = -float(np.mean(q))
        _check(loss, self.updates, "actor loss")
        _, da = self.critic1.backward(ccache, np.full(q.shape, -1.0 / q.size))
        self.actor_opt.step(self.actor.backward(acache, da))
        self.soft_update()
        return loss

    def soft_update(self, tau: Optional[float] = None) -> None:
        tau = self.cfg.polyak_tau if tau is None else tau
        polyak_update(self.actor_target, self.actor, tau)
        polyak_update(self.critic1_target, self.critic1, tau)
        polyak_update(self.critic2_target, self.critic2, tau)

    def update(self, buffer: ReplayBuffer):
        """Critic step, plus an actor step every ``policy_delay`` critic steps."""
        batch = buffer.sample(self.cfg.batch_size)
        net = self.actor.net
        powers = prepare_graph(batch["H"], net)
        powers2 = prepare_graph(batch["H2"], net)
        l1, l2 = self.critic_update(batch, powers, powers2)
        la = None
        if self.updates % self.cfg.policy_delay == 0:
            la = self.actor_update(batch, powers)
        return l1, l2, la


@dataclass
class TrainingReport:
    records: List[dict] = field(default_factory=list)
    episodes: int = 0
    steps: int = 0
    updates: int = 0
    best_episode: Optional[int] = None
    best_sum_rate: Optional[float] = None
    best_return: Optional[float] = None
    best_feasible: bool = False
    best_violations: Optional[float] = None
    stopped_early: bool = False
    best_nets: Optional[Dict[str, object]] = None

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")


def _improves(ev: dict, report: TrainingReport, max_violations: float) -> bool:
    """Checkpoint ranking: feasible evaluations (validation violations per
    transmitter within ``max_violations``) beat infeasible ones and are ranked
    by sum-rate; infeasible ones are ranked by fewest violations, then sum-rate."""
    if report.best_episode is None:
        return True
    v = ev["violations_per_tx"]
    feasible = v <= max_violations
    if feasible != report.best_feasible:
        return feasible
    if not feasible and v != report.best_violations:
        return v < report.best_violations
    return ev["mean_sum_rate"] > report.best_sum_rate


def episode_streams(seed: int, split: str, k: int):
    """Channel and budget generators for episode ``k`` of a named split."""
    return rngmod.stream(seed, f"{split}-channels", k), rngmod.stream(seed, f"{split}-battery", k)


def make_episode(run: RunConfig, split: str, k: int, T: Optional[int] = None):
    ch, bat = episode_streams(run.seed, split, k)
    ep = sample_episode(run.topology, run.env.T if T is None else T, ch)
    return ep, sample_budget(run.env, run.topology.M, bat)


def train(run: RunConfig, agent: Optional[TD3Agent] = None, out_dir=None,
          start_episode: int = 0, progress: Optional[Callable[[dict], None]] = None) -> (
        tuple):
    """Roll episodes with exploration noise and interleave TD3 updates.

    Returns ``(agent, report)``. With ``out_dir`` set, the evaluation log
    (``train_report.jsonl``), periodic ``last`` checkpoints and the ``best``
    checkpoint are written there.
    """
    from .evaluation import evaluate_policy

    cfg, env_cfg = run.train, run.env
    if agent is None:
        agent = TD3Agent.create(run, rngmod.stream(run.seed, "init"), rngmod.stream(run.seed, "target-noise"))
    report = TrainingReport()
    if cfg.max_episodes == 0 or start_episode >= cfg.max_episodes:
        return agent, report

    out = Path(out_dir) if out_dir is not None else None
    chash = config_hash(run)
    buffer = ReplayBuffer(cfg.buffer_size, run.topology.M, rngmod.stream(run.seed, "replay", start_episode))
    explore = rngmod.stream(run.seed, "exploration", start_episode)
    validation = [make_episode(run, "validation", j) for j in range(cfg.eval_episodes)]
    M = run.topology.M
    steps = 0
    # a resumed run already has a trained actor; the replay buffer is not
    # checkpointed, so it refills from policy rollouts instead of random scales
    warmup = cfg.warmup_steps if start_episode == 0 else 0
    evals_since_best = 0
    losses = {"critic1": [], "critic2": [], "actor": []}
    t0 = time.time()

    def snapshot(episode, kind):
        if out is None:
            return
        manifest = {"config_hash": chash, "episode": episode, "updates": agent.updates, "kind": kind}
        save_checkpoint(out / kind, agent.nets, manifest, agent.optimizer_state())

    episode = start_episode
    for episode in range(start_episode, cfg.max_episodes):
        ep, b = make_episode(run, "train", episode)
        p_bar_all = wmmse_solve(ep.channels, run.wmmse)
        c_bar_all = rate(p_bar_all, ep.channels, env_cfg.sigma_N)
        for t in range(ep.T):
            H, p_bar = ep.channels[t], p_bar_all[t]
            if steps < warmup:
                a = explore.uniform(0.0, 1.0, size=M)
            else:
                a = agent.actor.explore_scale(b, H, cfg.exploration_noise, explore,
                                              p_bar=p_bar, c_bar=c_bar_all[t])
            res = battery_step(b, H, a * p_bar, env_cfg, terminal=t == ep.T - 1)
            nxt = min(t + 1, ep.T - 1)
            buffer.add(b, H, p_bar, a, res.reward, res.next_battery, ep.channels[nxt], p_bar_all[nxt],
                       res.terminal, c_bar_all[t], c_bar_all[nxt])
            b = res.next_battery
            steps += 1
            if steps >= warmup and len(buffer) >= cfg.batch_size:
                l1, l2, la = agent.update(buffer)
                losses["critic1"].append(l1)
                losses["critic2"].append(l2)
                if la is not None:
                    losses["actor"].append(la)

        done_episodes = episode + 1
        if done_episodes % cfg.eval_interval == 0 or done_episodes == cfg.max_episodes:
            ev = evaluate_policy(agent.actor, validation, run)
            rec = {
                "episode": done_episodes,
                "steps": steps,
                "updates": agent.updates,
                "mean_sum_rate": ev["mean_sum_rate"],
                "mean_return": ev["mean_return"],
                "violations_per_tx": ev["violations_per_tx"],
                "critic1_loss": float(np.mean(losses["critic1"])) if losses["critic1"] else None,
                "critic2_loss": float(np.mean(losses["critic2"])) if losses["critic2"] else None,
                "actor_loss": float(np.mean(losses["actor"])) if losses["actor"] else None,
                "elapsed_s": round(time.time() - t0, 2),
            }
            losses = {k: [] for k in losses}
            report.records.append(rec)
            if progress is not None:
                progress(rec)
            log.info("episode %d: sum-rate %.3f, violations/tx %.4f", done_episodes,
                     rec["mean_sum_rate"], rec["violations_per_tx"])
            if _improves(ev, report, cfg.max_violations):
                report.best_feasible = ev["violations_per_tx"] <= cfg.max_violations
                report.best_return = ev["mean_return"]
                report.best_violations = ev["violations_per_tx"]
                report.best_sum_rate = ev["mean_sum_rate"]
                report.best_episode = done_episodes
                report.best_nets = {k: v.copy() for k, v in agent.nets.items()}
                evals_since_best = 0
                snapshot(done_episodes, "best")
            else:
                evals_since_best += 1
            if out is not None:
                report.write_jsonl(out / "train_report.jsonl")
            if evals_since_best >= cfg.patience:
                report.stopped_early = True
                break
        if out is not None and done_episodes % cfg.checkpoint_interval == 0:
            snapshot(done_episodes, "last")

    report.episodes = episode + 1 - start_episode
    report.steps = steps
    report.updates = agent.updates
    snapshot(episode + 1, "last")
    return agent, report


def resume_agent(run: RunConfig, path) -> tuple:
    """Rebuild an agent (networks and optimizer moments) from a checkpoint."""
    nets, manifest, tensors = load_checkpoint(path, run.network, run.env.B_max, config_hash(run),
                                              alpha=run.env.alpha)
    agent = TD3Agent(nets["actor"], nets["critic1"], nets["critic2"], run.train, run.env.gamma,
                     rngmod.stream(run.seed, "target-noise", manifest["episode"]))
    agent.actor_target = nets["actor_target"]
    agent.critic1_target = nets["critic1_target"]
    agent.critic2_target = nets["critic2_target"]
    agent.actor_opt.load_state(tensors, "opt_actor")
    agent.critic1_opt.load_state(tensors, "opt_critic1")
    agent.critic2_opt.load_state(tensors, "opt_critic2")
    agent.updates = int(tensors["updates"])
    return agent, manifest


__all__ += ["resume_agent", "make_episode", "episode_streams"]
