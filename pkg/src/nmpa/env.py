"""Episodic battery-constrained power allocation environment.

State is the battery vector ``b`` plus the current CSI matrix; the action is
an allocated power vector ``p`` in ``[0, P_max]^M``. What is actually
transmitted is ``p_hat = min(p, [b - alpha]_+)``, so batteries never go
negative.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .network import Episode, TopologyConfig, sample_episode

__all__ = [
    "EnvConfig",
    "StepOutcome",
    "ContractViolation",
    "rate",
    "sum_rate",
    "transmitted_power",
    "violation_mask",
    "battery_step",
    "sample_budget",
    "BatteryEnv",
]


class ContractViolation(ValueError):
    """Raised when an allocation leaves the ``[0, P_max]`` box."""


@dataclass(frozen=True)
class EnvConfig:
    P_max: float = 1.0
    B_max: float = 20.0
    alpha: float = 0.5
    L: float = 1.0
    sigma_N: float = 0.01
    gamma: float = 0.99
    T: int = 100
    tx_threshold: float = 1e-3

    def __post_init__(self):
        if not self.P_max > 0:
            raise ValueError(f"P_max must be > 0, got {self.P_max}")
        if self.B_max < 2 * self.P_max:
            raise ValueError(f"B_max must be >= 2*P_max, got {self.B_max}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.L < 0:
            raise ValueError(f"L must be >= 0, got {self.L}")
        if not self.sigma_N > 0:
            raise ValueError(f"sigma_N must be > 0, got {self.sigma_N}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.tx_threshold < 0:
            raise ValueError(f"tx_threshold must be >= 0, got {self.tx_threshold}")


@dataclass
class StepOutcome:
    reward: float
    sum_rate: float
    violations: int
    next_battery: np.ndarray
    transmitted: np.ndarray
    terminal: bool = False


def rate(p, H, sigma_N):
    """Per-receiver rate ``log2(1 + SINR)``; broadcasts over leading batch axes."""
    p = np.asarray(p, dtype=float)
    H = np.asarray(H, dtype=float)
    G = H ** 2
    M = G.shape[-1]
    signal = np.diagonal(G, axis1=-2, axis2=-1) * p
    interference = np.einsum("...ij,...j->...i", G * (1.0 - np.eye(M)), p)
    return np.log2(1.0 + signal / (sigma_N ** 2 + interference))


def sum_rate(p, H, sigma_N):
    return np.sum(rate(p, H, sigma_N), axis=-1)


def transmitted_power(p, b, alpha):
    return np.minimum(p, np.maximum(b - alpha, 0.0))


def violation_mask(p, b, cfg: EnvConfig):
    """Allocated power above what the battery can cover after the fixed cost.

    Allocations at or below ``tx_threshold`` are not transmission attempts and
    never count.
    """
    return (p > b - cfg.alpha) & (p > cfg.tx_threshold)


def battery_step(b, H, p, cfg: EnvConfig, terminal: bool = False) -> StepOutcome:
    b = np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > cfg.P_max) or not np.all(np.isfinite(p)):
        raise ContractViolation(
            f"allocation outside [0, {cfg.P_max}]: min={p.min()}, max={p.max()}"
        )
    p_hat = transmitted_power(p, b, cfg.alpha)
    is_tx = p_hat > cfg.tx_threshold
    next_b = np.maximum(b - p_hat - cfg.alpha * is_tx, 0.0)
    sr = float(sum_rate(p_hat, H, cfg.sigma_N))
    viol = int(np.count_nonzero(violation_mask(p, b, cfg)))
    return StepOutcome(
        reward=sr - cfg.L * viol,
        sum_rate=sr,
        violations=viol,
        next_battery=next_b,
        transmitted=p_hat,
        terminal=terminal,
    )


def sample_budget(cfg: EnvConfig, M: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.5 * cfg.B_max, cfg.B_max, size=M)


@dataclass
class _TraceRow:
    t: int
    battery: np.ndarray
    allocated: np.ndarray
    transmitted: np.ndarray
    sum_rate: float
    violations: int


class BatteryEnv:
    """Stateful wrapper stepping through one episode at a time.

    >>> env = BatteryEnv(TopologyConfig(M=3, topology_mode="uniform"), EnvConfig(T=5))
    >>> b0, ep = env.reset(np.random.default_rng(0), np.random.default_rng(1))
    >>> out = env.step(np.zeros(3))
    >>> out.reward
    0.0
    """

    def __init__(self, topology: TopologyConfig, cfg: EnvConfig):
        self.topology = topology
        self.cfg = cfg
        self.battery: Optional[np.ndarray] = None
        self.episode: Optional[Episode] = None
        self.t = 0
        self.trace: List[_TraceRow] = []

    def reset(self, channel_rng, battery_rng, T: Optional[int] = None, episode: Optional[Episode] = None,
              b0: Optional[np.ndarray] = None):
        T = self.cfg.T if T is None else T
        self.episode = episode if episode is not None else sample_episode(self.topology, T, channel_rng)
        self.battery = (np.array(b0, dtype=float) if b0 is not None
                        else sample_budget(self.cfg, self.topology.M, battery_rng))
        self.t = 0
        self.trace = []
        return self.battery.copy(), self.episode

    @property
    def channel(self) -> np.ndarray:
        """CSI matrix the next action is applied to."""
        return self.episode.channels[self.t]

    @property
    def done(self) -> bool:
        return self.episode is None or self.t >= self.episode.T

    def step(self, p) -> StepOutcome:
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        b = self.battery
        out = battery_step(b, self.channel, p, self.cfg, terminal=self.t + 1 == self.episode.T)
        self.trace.append(_TraceRow(self.t + 1, b.copy(), np.array(p, dtype=float),
                                    out.transmitted, out.sum_rate, out.violations))
        self.battery = out.next_battery
        self.t += 1
        return out

    def write_trace_csv(self, path) -> None:
        M = self.topology.M
        header = (["t"] + [f"battery_{i}" for i in range(M)] + [f"allocated_{i}" for i in range(M)]
                  + [f"transmitted_{i}" for i in range(M)] + ["sum_rate", "violations"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in self.trace:
                w.writerow([row.t, *map(repr, row.battery.tolist()), *map(repr, row.allocated.tolist()),
                            *map(repr, row.transmitted.tolist()), repr(row.sum_rate), row.violations])
