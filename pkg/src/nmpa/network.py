"""Topologies, fading channel matrices and i.i.d. channel episodes.

Convention: ``H[i, j]`` is the gain from transmitter ``j`` to receiver
``r(i)``; the diagonal holds direct links. Entries for transmitters outside
the range ``R`` of a receiver are exactly zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, List, Optional

import numpy as np

__all__ = [
    "TopologyConfig",
    "Topology",
    "Episode",
    "TOPOLOGY_MODES",
    "pathloss",
    "rayleigh",
    "interference_sets",
    "sample_topology",
    "sample_channel",
    "sample_episode",
    "write_episodes_jsonl",
    "read_episodes_jsonl",
]

TOPOLOGY_MODES = ("uniform", "good", "poor", "mixed")

# good mode: jittered grid, neighbours >= GOOD_MIN_SPACING apart
GOOD_MIN_SPACING = 30.0
GOOD_LINK = (2.0, 6.0)
# poor mode: transmitters packed in a small disc, long direct links
POOR_DISC_RADIUS = 10.0
POOR_LINK = (10.0, 14.0)


@dataclass(frozen=True)
class TopologyConfig:
    M: int = 10
    S: float = 60.0
    R: float = 20.0
    topology_mode: str = "mixed"

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if not self.S > 0:
            raise ValueError(f"S must be > 0, got {self.S}")
        if not 0 < self.R <= 2 * self.S:
            raise ValueError(f"R must lie in (0, 2S], got {self.R}")
        if self.topology_mode not in TOPOLOGY_MODES:
            raise ValueError(
                f"topology_mode must be one of {TOPOLOGY_MODES}, got {self.topology_mode!r}"
            )
        if self.topology_mode in ("good", "mixed"):
            _grid_layout(self.M, self.S)  # raises if the grid cannot fit


@dataclass
class Topology:
    tx_positions: np.ndarray  # (M, 2)
    rx_positions: np.ndarray  # (M, 2)
    R: float
    label: str = "uniform"

    @property
    def M(self) -> int:
        return self.tx_positions.shape[0]

    @property
    def distances(self) -> np.ndarray:
        """``d[i, j]`` = distance from transmitter ``j`` to receiver ``r(i)``."""
        diff = self.rx_positions[:, None, :] - self.tx_positions[None, :, :]
        return np.sqrt(np.sum(diff ** 2, axis=-1))

    @property
    def mask(self) -> np.ndarray:
        """Boolean (M, M) support of H: direct links plus in-range interferers."""
        m = self.distances <= self.R
        np.fill_diagonal(m, True)
        return m

    @property
    def interference_sets(self) -> List[set]:
        return interference_sets(self.tx_positions, self.rx_positions, self.R)


@dataclass
class Episode:
    """An ordered sequence of CSI matrices ``channels[t]`` of shape (T, M, M)."""

    channels: np.ndarray
    labels: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=float)
        if self.channels.ndim != 3 or self.channels.shape[1] != self.channels.shape[2]:
            raise ValueError(f"channels must have shape (T, M, M), got {self.channels.shape}")
        if self.channels.shape[0] < 1:
            raise ValueError("an episode needs at least one step")
        if not self.labels:
            self.labels = ["unknown"] * self.T

    @property
    def T(self) -> int:
        return self.channels.shape[0]

    @property
    def M(self) -> int:
        return self.channels.shape[1]

    def __len__(self) -> int:
        return self.T

    def __eq__(self, other) -> bool:
        if not isinstance(other, Episode):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.channels, other.channels)


def pathloss(d):
    return 1.0 / (1.0 + np.asarray(d, dtype=float) ** 2)


def rayleigh(rng: np.random.Generator, size) -> np.ndarray:
    """|z| for complex z with independent N(0, 1/2) real and imaginary parts."""
    z = rng.standard_normal(size) / math.sqrt(2) + 1j * rng.standard_normal(size) / math.sqrt(2)
    return np.abs(z)


def interference_sets(tx: np.ndarray, rx: np.ndarray, R: float) -> List[set]:
    diff = rx[:, None, :] - tx[None, :, :]
    d = np.sqrt(np.sum(diff ** 2, axis=-1))
    M = tx.shape[0]
    return [{j for j in range(M) if j != i and d[i, j] <= R} for i in range(M)]


def _grid_layout(M: int, S: float):
    side = math.ceil(math.sqrt(M))
    if side == 1:
        return np.zeros(1), 0.0
    pitch = 2 * S / (side - 1)
    if pitch < GOOD_MIN_SPACING:
        raise ValueError(
            f"good topology needs spacing >= {GOOD_MIN_SPACING}; M={M} does not fit in S={S}"
        )
    coords = -S + pitch * np.arange(side)
    jitter = (pitch - GOOD_MIN_SPACING) / 2
    return coords, jitter


def _place_receivers(rng, tx, lo, hi):
    M = tx.shape[0]
    dist = rng.uniform(lo, hi, size=M)
    angle = rng.uniform(0.0, 2 * np.pi, size=M)
    return tx + dist[:, None] * np.stack([np.cos(angle), np.sin(angle)], axis=1)


def _uniform_topology(cfg: TopologyConfig, rng) -> Topology:
    tx = rng.uniform(-cfg.S, cfg.S, size=(cfg.M, 2))
    half = cfg.R / math.sqrt(2)
    rx = tx + rng.uniform(-half, half, size=(cfg.M, 2))
    return Topology(tx, rx, cfg.R, "uniform")


def _good_topology(cfg: TopologyConfig, rng) -> Topology:
    coords, jitter = _grid_layout(cfg.M, cfg.S)
    gx, gy = np.meshgrid(coords, coords, indexing="ij")
    slots = np.stack([gx.ravel(), gy.ravel()], axis=1)
    chosen = slots[rng.permutation(len(slots))[: cfg.M]]
    tx = chosen + rng.uniform(-jitter, jitter, size=chosen.shape)
    tx = np.clip(tx, -cfg.S, cfg.S)
    rx = _place_receivers(rng, tx, *GOOD_LINK)
    return Topology(tx, rx, cfg.R, "good")


def _poor_topology(cfg: TopologyConfig, rng) -> Topology:
    r = POOR_DISC_RADIUS * np.sqrt(rng.uniform(size=cfg.M))
    phi = rng.uniform(0.0, 2 * np.pi, size=cfg.M)
    tx = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
    rx = _place_receivers(rng, tx, *POOR_LINK)
    return Topology(tx, rx, cfg.R, "poor")


def sample_topology(cfg: TopologyConfig, rng: np.random.Generator, mode: Optional[str] = None) -> Topology:
    """Drop ``M`` transceiver pairs.

    ``mode`` overrides ``cfg.topology_mode``; "mixed" picks good or poor with
    equal probability.
    """
    mode = mode or cfg.topology_mode
    if mode == "mixed":
        mode = "good" if rng.uniform() < 0.5 else "poor"
    if mode == "uniform":
        return _uniform_topology(cfg, rng)
    if mode == "good":
        return _good_topology(cfg, rng)
    if mode == "poor":
        return _poor_topology(cfg, rng)
    raise ValueError(f"unknown topology mode {mode!r}")


def sample_channel(topo: Topology, rng: np.random.Generator) -> np.ndarray:
    """Path loss times Rayleigh magnitude on the topology's support, zero elsewhere."""
    M = topo.M
    h = pathloss(topo.distances) * rayleigh(rng, (M, M))
    return np.where(topo.mask, h, 0.0)


def sample_episode(cfg: TopologyConfig, T: int, rng: np.random.Generator) -> Episode:
    """Draw ``T`` i.i.d. CSI matrices, with a fresh topology at every step."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    channels = np.empty((T, cfg.M, cfg.M))
    labels = []
    for t in range(T):
        topo = sample_topology(cfg, rng)
        channels[t] = sample_channel(topo, rng)
        labels.append(topo.label)
    return Episode(channels, labels)


# --- JSONL export -----------------------------------------------------------

def _episode_records(ep: Episode, index: int) -> Iterator[dict]:
    for t in range(ep.T):
        yield {
            "episode": index,
            "t": t + 1,
            "M": ep.M,
            "topology": ep.labels[t],
            # repr round-trips doubles exactly
            "H": [float(x) for x in ep.channels[t].ravel()],
        }


def write_episodes_jsonl(episodes: Iterable[Episode], path) -> int:
    """One JSON record per step; returns the number of episodes written."""
    n = 0
    with open(path, "w") as fh:
        for k, ep in enumerate(episodes):
            for rec in _episode_records(ep, k):
                fh.write(json.dumps(rec) + "\n")
            n += 1
    return n


def read_episodes_jsonl(path) -> List[Episode]:
    grouped = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        M = rec["M"]
        grouped.setdefault(rec["episode"], []).append(
            (rec["t"], np.asarray(rec["H"], dtype=float).reshape(M, M), rec["topology"])
        )
    episodes = []
    for k in sorted(grouped):
        steps = sorted(grouped[k], key=lambda s: s[0])
        episodes.append(Episode(np.stack([s[1] for s in steps]), [s[2] for s in steps]))
    return episodes
