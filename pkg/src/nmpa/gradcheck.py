"""Finite-difference check of the hand-written actor and critic gradients."""
from __future__ import annotations

from typing import Callable, List, Sequence

import numpy as np

from .config import NetConfig
from .env import rate
from .policy import Actor, Critic, prepare_graph

__all__ = ["numeric_gradient", "relative_error", "check_instance", "run_gradcheck"]


def numeric_gradient(f: Callable[[], float], arrays: Sequence[np.ndarray], h: float = 1e-6) -> List[np.ndarray]:
    """Central differences of ``f`` w.r.t. each array, perturbed in place."""
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = f()
            flat[i] = old - h
            fm = f()
            flat[i] = old
            gflat[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``|a - n| / max(|a| + |n|, 1e-10)`` over the whole tensor."""
    diff = np.linalg.norm(analytic - numeric)
    return float(diff / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-10))


def check_instance(rng: np.random.Generator, M: int, net: NetConfig, B_max: float = 20.0) -> float:
    """Max relative error over actor params, critic params and dQ/da."""
    H = np.abs(rng.normal(size=(M, M))) * rng.uniform(0.05, 0.5)
    b = rng.uniform(0, B_max, size=M)
    p_bar = rng.uniform(0, 1, size=M)
    c_bar = rate(p_bar, H, 0.1)
    a = rng.uniform(size=M)
    powers = prepare_graph(H, net)
    kw = dict(powers=powers, p_bar=p_bar, c_bar=c_bar)
    actor = Actor.create(net, B_max, rng)
    critic = Critic.create(net, B_max, rng)
    for p in (*actor.params.biases, *critic.params.biases):
        p += rng.normal(scale=0.3, size=p.shape)
    critic.c += rng.normal(size=1)
    up = rng.normal(size=M)

    errs = []
    s, cache = actor.forward(b, **kw)
    grads = actor.backward(cache, up)
    num = numeric_gradient(lambda: float(actor.scale(b, **kw) @ up), actor.arrays())
    errs += [relative_error(g, n) for g, n in zip(grads, num)]

    q, cache = critic.forward(b, a, **kw)
    grads, da = critic.backward(cache, 1.0)
    f = lambda: float(critic.value(b, None, a, **kw))
    num = numeric_gradient(f, [*critic.arrays(), a])
    errs += [relative_error(g, n) for g, n in zip([*grads, da], num)]
    return max(errs)


def run_gradcheck(n_instances: int = 50, sizes: Sequence[int] = (2, 3, 5), seed: int = 0,
                  net: NetConfig = NetConfig(hidden=8, normalize_battery=True, extra_features=["rate"])) -> dict:
    """Check ``n_instances`` random actor/critic pairs cycling through ``sizes``."""
    rng = np.random.default_rng(seed)
    errs = [check_instance(rng, sizes[k % len(sizes)], net) for k in range(n_instances)]
    return {"instances": n_instances, "max_relative_error": max(errs) if errs else 0.0,
            "mean_relative_error": float(np.mean(errs)) if errs else 0.0}
