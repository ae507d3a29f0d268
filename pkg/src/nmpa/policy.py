"""Actor (per-transmitter scales) and twin critics built on the GCNN core.

The actor maps the battery signal on the channel graph to scales in (0, 1);
the emitted allocation is ``scale * p_bar`` so it stays inside the power box
whenever ``p_bar`` does. Critics take ``[battery, scale]`` node features,
average the GCNN output over nodes and apply an affine readout.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import NetConfig
from .gcnn import (
    GcnnParams,
    gcnn_backward,
    gcnn_forward,
    graph_powers,
    init_params,
    params_from_tensors,
    params_to_tensors,
)

__all__ = [
    "Actor",
    "Critic",
    "prepare_graph",
    "node_features",
    "headroom",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]


class CheckpointError(RuntimeError):
    pass


def prepare_graph(H, net: NetConfig) -> np.ndarray:
    """Graph-power stack shared by the actor and both critics for one state."""
    return graph_powers(np.asarray(H, dtype=float) * net.channel_gain, net.orders)


def headroom(b, p_bar, alpha: float) -> np.ndarray:
    """Largest scale that keeps ``scale * p_bar`` within ``b - alpha``, clipped to [-1, 2]."""
    b = np.asarray(b, dtype=float)
    p_bar = np.asarray(p_bar, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = (b - alpha) / p_bar
    # p_bar = 0 means any scale is safe
    h = np.where(p_bar > 0, h, 2.0)
    return np.clip(h, -1.0, 2.0)


def node_features(net: NetConfig, B_max: float, b, action=None, p_bar=None, c_bar=None,
                  alpha: float = 0.5) -> np.ndarray:
    """Stack per-node inputs: battery, [action], then ``net.extra_features``."""
    b = np.asarray(b, dtype=float)
    cols = [b / B_max if net.normalize_battery else b]
    if action is not None:
        cols.append(np.asarray(action, dtype=float))
    for name in net.extra_features:
        if name == "headroom":
            value = None if p_bar is None else headroom(b, p_bar, alpha)
        else:
            value = {"rate": c_bar, "p_bar": p_bar}[name]
        if value is None:
            raise ValueError(f"feature {name!r} is enabled but was not supplied")
        cols.append(np.broadcast_to(np.asarray(value, dtype=float), b.shape))
    return np.stack(cols, axis=-1)


def _trainable(params: GcnnParams, net: NetConfig) -> List[np.ndarray]:
    return params.arrays() if net.bias else list(params.taps)


class Actor:
    def __init__(self, params: GcnnParams, net: NetConfig, B_max: float, alpha: float = 0.5):
        self.params = params
        self.net = net
        self.B_max = B_max
        self.alpha = alpha

    @classmethod
    def create(cls, net: NetConfig, B_max: float, rng, alpha: float = 0.5) -> "Actor":
        p = init_params(1 + len(net.extra_features), net.hidden, 1, rng, net.orders)
        return cls(p, net, B_max, alpha)

    @classmethod
    def zeros(cls, net: NetConfig, B_max: float, alpha: float = 0.5) -> "Actor":
        a = cls.create(net, B_max, np.random.default_rng(0), alpha)
        for arr in a.params.arrays():
            arr[...] = 0.0
        return a

    def arrays(self) -> List[np.ndarray]:
        """Trainable tensors (biases are excluded when ``net.bias`` is off)."""
        return _trainable(self.params, self.net)

    def copy(self) -> "Actor":
        return Actor(self.params.copy(), self.net, self.B_max, self.alpha)

    def forward(self, b, H=None, powers=None, p_bar=None, c_bar=None):
        """Scales in (0, 1) of shape (..., M) and the backprop cache."""
        if powers is None:
            powers = prepare_graph(H, self.net)
        x = node_features(self.net, self.B_max, b, p_bar=p_bar, c_bar=c_bar, alpha=self.alpha)
        y, cache = gcnn_forward(None, x, self.params, "sigmoid", powers=powers,
                                slope=self.net.leaky_slope)
        return y[..., 0], cache

    def scale(self, b, H=None, powers=None, p_bar=None, c_bar=None) -> np.ndarray:
        return self.forward(b, H, powers, p_bar, c_bar)[0]

    def backward(self, cache, dscale) -> List[np.ndarray]:
        grads, _ = gcnn_backward(cache, self.params, np.asarray(dscale)[..., None],
                                 slope=self.net.leaky_slope)
        return _trainable(grads, self.net)

    def act(self, b, H, p_bar, powers=None, c_bar=None) -> np.ndarray:
        return self.scale(b, H, powers, p_bar, c_bar) * np.asarray(p_bar, dtype=float)

    def explore_scale(self, b, H, noise_std: float, rng, powers=None, p_bar=None, c_bar=None) -> np.ndarray:
        s = self.scale(b, H, powers, p_bar, c_bar)
        if noise_std > 0:
            s = np.clip(s + rng.normal(0.0, noise_std, size=s.shape), 0.0, 1.0)
        return s

    def act_explore(self, b, H, p_bar, noise_std: float, rng, powers=None, c_bar=None) -> np.ndarray:
        s = self.explore_scale(b, H, noise_std, rng, powers, p_bar, c_bar)
        return s * np.asarray(p_bar, dtype=float)


class Critic:
    """Q(s, a) = w . mean_nodes(GCNN([b, a, extras])) + c."""

    def __init__(self, params: GcnnParams, w: np.ndarray, c: np.ndarray, net: NetConfig, B_max: float,
                 alpha: float = 0.5):
        self.params = params
        self.w = w
        self.c = c
        self.net = net
        self.B_max = B_max
        self.alpha = alpha

    @classmethod
    def create(cls, net: NetConfig, B_max: float, rng, alpha: float = 0.5) -> "Critic":
        p = init_params(2 + len(net.extra_features), net.hidden, net.hidden, rng, net.orders)
        bound = 1.0 / np.sqrt(net.hidden)
        w = rng.uniform(-bound, bound, size=net.hidden)
        return cls(p, w, np.zeros(1), net, B_max, alpha)

    def arrays(self) -> List[np.ndarray]:
        return [*_trainable(self.params, self.net), self.w, self.c]

    def copy(self) -> "Critic":
        return Critic(self.params.copy(), self.w.copy(), self.c.copy(), self.net, self.B_max, self.alpha)

    def forward(self, b, a, H=None, powers=None, p_bar=None, c_bar=None):
        if powers is None:
            powers = prepare_graph(H, self.net)
        x = node_features(self.net, self.B_max, b, action=a, p_bar=p_bar, c_bar=c_bar, alpha=self.alpha)
        y, cache = gcnn_forward(None, x, self.params, "identity", powers=powers,
                                slope=self.net.leaky_slope)
        pooled = y.mean(axis=-2)
        q = pooled @ self.w + self.c[0]
        return q, (cache, pooled, y.shape[-2])

    def value(self, b, H, a, powers=None, p_bar=None, c_bar=None):
        return self.forward(b, a, H, powers, p_bar, c_bar)[0]

    def backward(self, cache, dq) -> Tuple[List[np.ndarray], np.ndarray]:
        """Gradients of ``sum(q * dq)``: parameter list and d/d(action)."""
        gcache, pooled, M = cache
        dq = np.asarray(dq, dtype=float)
        dw = np.tensordot(dq, pooled, axes=dq.ndim) if dq.ndim else dq * pooled
        dc = np.array([np.sum(dq)])
        dpooled = dq[..., None] * self.w
        dy = np.repeat(dpooled[..., None, :] / M, M, axis=-2)
        grads, dx = gcnn_backward(gcache, self.params, dy, slope=self.net.leaky_slope)
        return [*_trainable(grads, self.net), dw, dc], dx[..., 1]


# --- checkpoints --------------------------------------------------------------

_NETS = ("actor", "critic1", "critic2", "actor_target", "critic1_target", "critic2_target")


def _critic_tensors(c: Critic, prefix: str) -> Dict[str, np.ndarray]:
    t = params_to_tensors(c.params, prefix)
    t[prefix + "readout.weight"] = c.w.copy()
    t[prefix + "readout.bias"] = c.c.copy()
    return t


def save_checkpoint(path, nets: Dict[str, object], manifest: dict,
                    extra: Optional[Dict[str, np.ndarray]] = None) -> None:
    """Write ``<path>.npz`` (named tensors) and ``<path>.json`` (manifest)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = {}
    for name, net in nets.items():
        if isinstance(net, Actor):
            tensors.update(params_to_tensors(net.params, name + "/"))
        else:
            tensors.update(_critic_tensors(net, name + "/"))
    tensors.update(extra or {})
    np.savez(path.with_suffix(".npz"), **tensors)
    path.with_suffix(".json").write_text(json.dumps({**manifest, "nets": sorted(nets)}, indent=2))


def load_checkpoint(path, net: NetConfig, B_max: float, expected_hash: Optional[str] = None,
                    force: bool = False, alpha: float = 0.5):
    """Return ``(nets, manifest, tensors)``; raises on a config-hash mismatch unless forced."""
    path = Path(path)
    npz, js = path.with_suffix(".npz"), path.with_suffix(".json")
    if not npz.is_file() or not js.is_file():
        raise CheckpointError(f"checkpoint not found: {path} (.npz/.json)")
    manifest = json.loads(js.read_text())
    if expected_hash is not None and manifest.get("config_hash") != expected_hash and not force:
        raise CheckpointError(
            f"config hash mismatch: checkpoint {manifest.get('config_hash')} vs config {expected_hash}"
        )
    with np.load(npz, allow_pickle=False) as f:
        tensors = {k: f[k].copy() for k in f.files}
    nets = {}
    for name in manifest["nets"]:
        p = params_from_tensors(tensors, name + "/")
        if name.startswith("actor"):
            nets[name] = Actor(p, net, B_max, alpha)
        else:
            nets[name] = Critic(p, tensors[name + "/readout.weight"], tensors[name + "/readout.bias"],
                                net, B_max, alpha)
    return nets, manifest, tensors
