"""Classical scalar WMMSE for the instantaneous sum-rate problem.

Alternates closed-form receiver (u), weight (w) and transmitter (v) updates;
the allocated power is ``v**2``, projected onto ``[0, P_max]``.

From the all-full-power start a symmetric channel keeps every user on the
same trajectory, so the solver can stall at a symmetric stationary point
when interference is strong. With ``single_user_starts`` the iteration is
also run from each "only user i transmits" start and the candidate with the
highest sum-rate wins (ties go to the full-power start).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import sum_rate

__all__ = ["WmmseConfig", "SolverDivergenceError", "wmmse_solve", "sum_rate_of"]


class SolverDivergenceError(FloatingPointError):
    def __init__(self, iteration: int, what: str):
        super().__init__(f"non-finite {what} at WMMSE iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class WmmseConfig:
    iterations: int = 4
    P_max: float = 1.0
    sigma_N: float = 0.01
    epsilon_w: float = 1e-12
    single_user_starts: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.epsilon_w > 0:
            raise ValueError(f"epsilon_w must be > 0, got {self.epsilon_w}")
        if not self.sigma_N > 0:
            raise ValueError(f"sigma_N must be > 0, got {self.sigma_N}")


def _iterate(H, v, cfg: WmmseConfig):
    G = H ** 2
    h = np.diagonal(H, axis1=-2, axis2=-1)
    noise = cfg.sigma_N ** 2
    vmax = np.sqrt(cfg.P_max)
    for k in range(cfg.iterations):
        u = h * v / (noise + np.einsum("...ij,...j->...i", G, v ** 2))
        w = 1.0 / (1.0 - u * h * v + cfg.epsilon_w)
        # sum_j H_ji^2 u_j^2 w_j, i.e. G^T (u^2 w)
        denom = np.einsum("...ji,...j->...i", G, u ** 2 * w) + cfg.epsilon_w
        v = np.clip(h * u * w / denom, 0.0, vmax)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
            raise SolverDivergenceError(k, "update")
    return np.minimum(v ** 2, cfg.P_max)


def wmmse_solve(H, cfg: WmmseConfig) -> np.ndarray:
    """Power allocation for one channel matrix or a stack of shape (..., M, M)."""
    H = np.asarray(H, dtype=float)
    M = H.shape[-1]
    vmax = np.sqrt(cfg.P_max)
    full = np.full(H.shape[:-1], vmax)
    if not cfg.single_user_starts or M == 1:
        return _iterate(H, full, cfg)
    starts = np.concatenate([np.ones((1, M)), np.eye(M)]) * vmax  # (1+M, M)
    v0 = np.broadcast_to(starts.reshape((1 + M,) + (1,) * (H.ndim - 2) + (M,)), (1 + M,) + H.shape[:-1])
    p = _iterate(H[None], v0, cfg)
    sr = sum_rate(p, H[None], cfg.sigma_N)
    best = np.argmax(sr, axis=0)
    return np.take_along_axis(p, best[None, ..., None], axis=0)[0]


def sum_rate_of(H, p, sigma_N) -> float:
    return sum_rate(p, H, sigma_N)
