"""Paired NMPA/MPA evaluation, violation accounting and plot-ready exports.

The episodic sum-rate of a rollout is the per-step sum-rate averaged over
the episode length. Improvements are computed per paired episode and then
averaged.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import RunConfig
from .env import battery_step, rate
from .network import Episode
from .policy import Actor, prepare_graph
from .wmmse import wmmse_solve

__all__ = [
    "Rollout",
    "EvalReport",
    "rollout",
    "run_mpa",
    "run_nmpa",
    "evaluate_policy",
    "compare",
    "sweep_lengths",
    "scale_histogram",
    "write_trajectories_csv",
    "write_histogram_csv",
    "write_sweep_csv",
    "write_summary_json",
]


@dataclass
class Rollout:
    sum_rate: np.ndarray  # (T,)
    violations: np.ndarray  # (T,)
    battery: np.ndarray  # (T+1, M), battery[t] is the level before step t+1
    scale: np.ndarray  # (T, M)
    p_bar: np.ndarray
    allocated: np.ndarray
    transmitted: np.ndarray
    achievable: np.ndarray  # per-transmitter rate of p_bar alone, (T, M)
    rewards: np.ndarray

    @property
    def T(self) -> int:
        return len(self.sum_rate)

    @property
    def M(self) -> int:
        return self.battery.shape[1]

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.sum_rate)

    @property
    def episodic_sum_rate(self) -> float:
        return float(np.mean(self.sum_rate))

    @property
    def total_violations(self) -> int:
        return int(np.sum(self.violations))


def rollout(episode: Episode, b0, run: RunConfig, actor: Optional[Actor] = None) -> Rollout:
    """Noise-free rollout; ``actor=None`` gives the myopic (MPA) allocation."""
    env_cfg = run.env
    H = episode.channels
    T, M = H.shape[0], H.shape[1]
    p_bar = wmmse_solve(H, run.wmmse)
    achievable = rate(p_bar, H, env_cfg.sigma_N)
    if actor is None:
        scale = np.ones((T, M))
    else:
        # scales depend on the battery, so the actor runs step by step
        scale = np.empty((T, M))
    b = np.array(b0, dtype=float)
    battery = np.empty((T + 1, M))
    battery[0] = b
    sr = np.empty(T)
    viol = np.empty(T, dtype=int)
    rew = np.empty(T)
    alloc = np.empty((T, M))
    trans = np.empty((T, M))
    powers = prepare_graph(H, actor.net) if actor is not None else None
    for t in range(T):
        if actor is not None:
            scale[t] = actor.scale(b, powers=powers[t], p_bar=p_bar[t], c_bar=achievable[t])
        p = scale[t] * p_bar[t]
        out = battery_step(b, H[t], p, env_cfg, terminal=t == T - 1)
        sr[t], viol[t], rew[t] = out.sum_rate, out.violations, out.reward
        alloc[t], trans[t] = p, out.transmitted
        b = out.next_battery
        battery[t + 1] = b
    return Rollout(sr, viol, battery, scale, p_bar, alloc, trans, achievable, rew)


def run_mpa(episode: Episode, b0, run: RunConfig) -> Rollout:
    return rollout(episode, b0, run, None)


def run_nmpa(episode: Episode, b0, actor: Actor, run: RunConfig) -> Rollout:
    return rollout(episode, b0, run, actor)


def evaluate_policy(actor: Optional[Actor], episodes, run: RunConfig) -> dict:
    rolls = [rollout(ep, b0, run, actor) for ep, b0 in episodes]
    M = run.topology.M
    return {
        "mean_sum_rate": float(np.mean([r.episodic_sum_rate for r in rolls])),
        "mean_return": float(np.mean([r.rewards.sum() for r in rolls])),
        "violations_per_tx": float(sum(r.total_violations for r in rolls) / (M * len(rolls))),
    }


def _stats(x) -> dict:
    x = np.asarray(x, dtype=float)
    return {
        "mean": float(np.mean(x)) if x.size else math.nan,
        "std": float(np.std(x)) if x.size else math.nan,
        "n": int(x.size),
    }


@dataclass
class EvalReport:
    T: int
    M: int
    nmpa: List[Rollout] = field(default_factory=list)
    mpa: List[Rollout] = field(default_factory=list)

    @property
    def n_episodes(self) -> int:
        return len(self.mpa)

    @property
    def improvements(self) -> np.ndarray:
        return np.array([(n.episodic_sum_rate - m.episodic_sum_rate) / m.episodic_sum_rate
                         for n, m in zip(self.nmpa, self.mpa)])

    def violations_per_tx(self, which: str = "nmpa") -> float:
        rolls = getattr(self, which)
        if not rolls:
            return math.nan
        return sum(r.total_violations for r in rolls) / (self.M * len(rolls))

    def summary(self) -> dict:
        return {
            "T": self.T,
            "M": self.M,
            "episodes": self.n_episodes,
            "nmpa_episodic_sum_rate": _stats([r.episodic_sum_rate for r in self.nmpa]),
            "mpa_episodic_sum_rate": _stats([r.episodic_sum_rate for r in self.mpa]),
            "relative_improvement": _stats(self.improvements),
            "nmpa_violations_per_tx": self.violations_per_tx("nmpa"),
            "mpa_violations_per_tx": self.violations_per_tx("mpa"),
        }


def compare(run: RunConfig, actor: Actor, n_episodes: int, T: Optional[int] = None,
            split: str = "test", baseline: Optional[Actor] = None) -> EvalReport:
    """Paired rollouts: both allocators see identical episodes and budgets.

    ``baseline`` replaces MPA with another actor (MPA when None).
    """
    from .td3 import make_episode

    T = run.env.T if T is None else T
    rep = EvalReport(T=T, M=run.topology.M)
    for k in range(n_episodes):
        ep, b0 = make_episode(run, split, k, T)
        rep.nmpa.append(rollout(ep, b0, run, actor))
        rep.mpa.append(rollout(ep, b0, run, baseline))
    return rep


def sweep_lengths(run: RunConfig, actor: Actor, lengths: Sequence[int], n_episodes: int,
                  split: str = "test") -> List[dict]:
    """Per-length NMPA vs MPA table; the policy never sees the length."""
    rows = []
    for T in lengths:
        rep = compare(run, actor, n_episodes, int(T), split)
        s = rep.summary()
        rows.append({
            "length": int(T),
            "episodes": rep.n_episodes,
            "nmpa_mean": s["nmpa_episodic_sum_rate"]["mean"],
            "nmpa_std": s["nmpa_episodic_sum_rate"]["std"],
            "mpa_mean": s["mpa_episodic_sum_rate"]["mean"],
            "mpa_std": s["mpa_episodic_sum_rate"]["std"],
            "improvement_mean": s["relative_improvement"]["mean"],
            "nmpa_violations_per_tx": s["nmpa_violations_per_tx"],
        })
    return rows


def scale_histogram(rollouts: Sequence[Rollout], B_max: float, bins: int = 20,
                    rate_max: Optional[float] = None) -> List[dict]:
    """Mean scale per (available battery, achievable rate) bin.

    Battery bins span ``[0, B_max]``; rate bins span ``[0, rate_max]``
    (default: 99th percentile). Values beyond the last edge fall into the last
    bin so every (transmitter, step) record is counted once. Empty bins carry
    ``mean_scale = nan``.
    """
    bat = np.concatenate([r.battery[:-1].ravel() for r in rollouts]) if rollouts else np.zeros(0)
    ach = np.concatenate([r.achievable.ravel() for r in rollouts]) if rollouts else np.zeros(0)
    sc = np.concatenate([r.scale.ravel() for r in rollouts]) if rollouts else np.zeros(0)
    if rate_max is None:
        rate_max = float(np.percentile(ach, 99)) if ach.size else 1.0
    rate_max = rate_max if rate_max > 0 else 1.0
    b_edges = np.linspace(0.0, B_max, bins + 1)
    r_edges = np.linspace(0.0, rate_max, bins + 1)
    bi = np.clip(np.searchsorted(b_edges, bat, side="right") - 1, 0, bins - 1)
    ri = np.clip(np.searchsorted(r_edges, ach, side="right") - 1, 0, bins - 1)
    count = np.zeros((bins, bins), dtype=int)
    total = np.zeros((bins, bins))
    np.add.at(count, (bi, ri), 1)
    np.add.at(total, (bi, ri), sc)
    rows = []
    for i in range(bins):
        for j in range(bins):
            n = int(count[i, j])
            rows.append({
                "battery_lo": b_edges[i], "battery_hi": b_edges[i + 1],
                "rate_lo": r_edges[j], "rate_hi": r_edges[j + 1],
                "count": n,
                "mean_scale": total[i, j] / n if n else math.nan,
            })
    return rows


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])


def _fmt(x):
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return x


def write_trajectories_csv(report: EvalReport, path) -> None:
    rows = []
    for k, (n, m) in enumerate(zip(report.nmpa, report.mpa)):
        nc, mc = n.cumulative, m.cumulative
        for t in range(report.T):
            rows.append({"episode": k, "t": t + 1,
                         "nmpa_sum_rate": float(n.sum_rate[t]), "mpa_sum_rate": float(m.sum_rate[t]),
                         "nmpa_cumulative": float(nc[t]), "mpa_cumulative": float(mc[t]),
                         "nmpa_violations": int(n.violations[t]), "mpa_violations": int(m.violations[t])})
    _write_csv(path, ["episode", "t", "nmpa_sum_rate", "mpa_sum_rate", "nmpa_cumulative",
                      "mpa_cumulative", "nmpa_violations", "mpa_violations"], rows)


def write_histogram_csv(rows: List[dict], path) -> None:
    _write_csv(path, ["battery_lo", "battery_hi", "rate_lo", "rate_hi", "count", "mean_scale"], rows)


def write_sweep_csv(rows: List[dict], path) -> None:
    _write_csv(path, ["length", "episodes", "nmpa_mean", "nmpa_std", "mpa_mean", "mpa_std",
                      "improvement_mean", "nmpa_violations_per_tx"], rows)


def write_summary_json(summary: Dict, path) -> None:
    def clean(o):
        if isinstance(o, float) and math.isnan(o):
            return None
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, list):
            return [clean(v) for v in o]
        return o
    Path(path).write_text(json.dumps(clean(summary), indent=2, sort_keys=True) + "\n")
