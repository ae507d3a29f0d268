"""Two-layer polynomial graph convolution with hand-written backprop.

Layer ``l`` maps a node signal ``X`` (M x F_in) on the graph with weighted
adjacency ``H`` to ``sum_v H^v X taps[v] + bias``. The hidden layer uses a
leaky ReLU; the output layer is either a sigmoid (actor scales) or the
identity (critic features). Everything accepts leading batch axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

__all__ = [
    "GcnnParams",
    "GcnnCache",
    "init_params",
    "zeros_like_params",
    "graph_powers",
    "leaky_relu",
    "gcnn_forward",
    "gcnn_backward",
    "save_params",
    "load_params",
    "OUTPUTS",
]

OUTPUTS = ("sigmoid", "identity")
LEAKY_SLOPE = 0.01


@dataclass
class GcnnParams:
    """Filter taps per layer, each of shape (orders, F_in, F_out), plus biases."""

    taps: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.taps) != len(self.biases):
            raise ValueError("one bias per layer")
        for l, (w, b) in enumerate(zip(self.taps, self.biases)):
            if w.ndim != 3 or b.shape != (w.shape[2],):
                raise ValueError(f"layer {l}: taps {w.shape} and bias {b.shape} are inconsistent")
            if l and w.shape[1] != self.taps[l - 1].shape[2]:
                raise ValueError(f"layer {l}: F_in {w.shape[1]} != previous F_out {self.taps[l - 1].shape[2]}")

    @property
    def orders(self) -> int:
        return self.taps[0].shape[0]

    @property
    def f_in(self) -> int:
        return self.taps[0].shape[1]

    @property
    def f_out(self) -> int:
        return self.taps[-1].shape[2]

    def named(self) -> Dict[str, np.ndarray]:
        """Flat name -> tensor view; names are ``layer{l}.order{v}`` and ``layer{l}.bias``."""
        out = {}
        for l, (w, b) in enumerate(zip(self.taps, self.biases)):
            for v in range(w.shape[0]):
                out[f"layer{l}.order{v}"] = w[v]
            out[f"layer{l}.bias"] = b
        return out

    def arrays(self) -> List[np.ndarray]:
        return [*self.taps, *self.biases]

    def copy(self) -> "GcnnParams":
        return GcnnParams([w.copy() for w in self.taps], [b.copy() for b in self.biases])


@dataclass
class GcnnCache:
    powers: np.ndarray
    inputs: List[np.ndarray] = field(default_factory=list)  # diffused inputs per layer
    pre: List[np.ndarray] = field(default_factory=list)
    output: Optional[np.ndarray] = None
    output_nonlinearity: str = "sigmoid"


def init_params(f_in: int, f_hidden: int, f_out: int, rng: np.random.Generator,
                orders: int = 3, bias: bool = True) -> GcnnParams:
    """Uniform in +-1/sqrt(F_in) per tap tensor; biases start at zero."""
    taps = []
    for a, b in ((f_in, f_hidden), (f_hidden, f_out)):
        bound = 1.0 / np.sqrt(a)
        taps.append(rng.uniform(-bound, bound, size=(orders, a, b)))
    return GcnnParams(taps, [np.zeros(f_hidden), np.zeros(f_out)])


def zeros_like_params(p: GcnnParams) -> GcnnParams:
    return GcnnParams([np.zeros_like(w) for w in p.taps], [np.zeros_like(b) for b in p.biases])


def graph_powers(H, orders: int = 3) -> np.ndarray:
    """Stack ``[I, H, H^2, ...]`` along a new axis -3: shape (..., orders, M, M)."""
    H = np.asarray(H, dtype=float)
    M = H.shape[-1]
    out = np.empty(H.shape[:-2] + (orders, M, M))
    out[..., 0, :, :] = np.eye(M)
    for v in range(1, orders):
        out[..., v, :, :] = out[..., v - 1, :, :] @ H
    return out


def leaky_relu(x, slope=LEAKY_SLOPE):
    return np.where(x >= 0, x, slope * x)


def _sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _diffuse(powers, X):
    # (..., K, M, M) @ (..., 1, M, F) -> (..., K, M, F) -> (..., M, K*F)
    S = powers @ X[..., None, :, :]
    S = np.moveaxis(S, -3, -2)
    return S.reshape(S.shape[:-2] + (-1,))


def _layer(S, w, b):
    return S @ w.reshape(-1, w.shape[2]) + b


def gcnn_forward(H, x, params: GcnnParams, output_nonlinearity: str = "sigmoid",
                 powers: Optional[np.ndarray] = None, slope: float = LEAKY_SLOPE):
    """Evaluate the network; returns ``(output, cache)``.

    ``x`` has shape (..., M, F_in) and ``H`` (..., M, M). ``powers`` may be
    passed to reuse a precomputed :func:`graph_powers` stack.
    """
    if output_nonlinearity not in OUTPUTS:
        raise ValueError(f"output_nonlinearity must be one of {OUTPUTS}")
    x = np.asarray(x, dtype=float)
    if powers is None:
        powers = graph_powers(H, params.orders)
    M = powers.shape[-1]
    if x.shape[-2] != M or x.shape[-1] != params.f_in:
        raise ValueError(f"signal shape {x.shape} does not match graph size {M} and F_in {params.f_in}")
    cache = GcnnCache(powers=powers, output_nonlinearity=output_nonlinearity)
    h = x
    n = len(params.taps)
    for l, (w, b) in enumerate(zip(params.taps, params.biases)):
        S = _diffuse(powers, h)
        z = _layer(S, w, b)
        cache.inputs.append(S)
        cache.pre.append(z)
        if l < n - 1:
            h = leaky_relu(z, slope)
        elif output_nonlinearity == "sigmoid":
            h = _sigmoid(z)
        else:
            h = z
    cache.output = h
    return h, cache


def _undiffuse(powers, dS, F):
    # adjoint of _diffuse: sum_v (H^v)^T dS_v
    dS = dS.reshape(dS.shape[:-1] + (-1, F))
    dS = np.moveaxis(dS, -2, -3)
    return np.sum(np.swapaxes(powers, -1, -2) @ dS, axis=-3)


def gcnn_backward(cache: GcnnCache, params: GcnnParams, upstream, slope: float = LEAKY_SLOPE):
    """Reverse-mode gradients of ``sum(output * upstream)``.

    Returns ``(param_grads, input_grad)``; parameter gradients are summed
    over any batch axes. The leaky-ReLU derivative at exactly 0 is taken as 1.
    """
    g = np.asarray(upstream, dtype=float)
    if cache.output_nonlinearity == "sigmoid":
        y = cache.output
        g = g * y * (1.0 - y)
    n = len(params.taps)
    taps = [None] * n
    biases = [None] * n
    for l in reversed(range(n)):
        w = params.taps[l]
        S = cache.inputs[l]
        if l < n - 1:
            g = g * np.where(cache.pre[l] >= 0, 1.0, slope)
        S2 = S.reshape(-1, S.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        taps[l] = (S2.T @ g2).reshape(w.shape)
        biases[l] = g2.sum(axis=0)
        dS = g @ w.reshape(-1, w.shape[2]).T
        g = _undiffuse(cache.powers, dS, w.shape[1])
    return GcnnParams(taps, biases), g


def save_params(path, tensors: Dict[str, np.ndarray]) -> None:
    """Write named tensors to ``.npz``; dtype and shape are stored per tensor."""
    np.savez(path, **tensors)


def load_params(path) -> Dict[str, np.ndarray]:
    with np.load(Path(path), allow_pickle=False) as f:
        return {k: f[k].copy() for k in f.files}


def params_to_tensors(p: GcnnParams, prefix: str = "") -> Dict[str, np.ndarray]:
    return {prefix + k: np.array(v) for k, v in p.named().items()}


def params_from_tensors(tensors: Dict[str, np.ndarray], prefix: str = "") -> GcnnParams:
    taps, biases = [], []
    l = 0
    while f"{prefix}layer{l}.bias" in tensors:
        orders = []
        v = 0
        while f"{prefix}layer{l}.order{v}" in tensors:
            orders.append(tensors[f"{prefix}layer{l}.order{v}"])
            v += 1
        taps.append(np.stack(orders))
        biases.append(np.array(tensors[f"{prefix}layer{l}.bias"]))
        l += 1
    if not taps:
        raise KeyError(f"no GCNN tensors with prefix {prefix!r}")
    return GcnnParams(taps, biases)


__all__ += ["params_to_tensors", "params_from_tensors"]
