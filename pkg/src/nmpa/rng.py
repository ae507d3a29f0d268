"""Named, independent random streams derived from one root seed.

Each stream is a Philox (counter-based) generator seeded from a
``SeedSequence`` whose spawn key encodes the stream name plus optional
integer indices, so ``stream(7, "fading", 3)`` is stable across runs and
independent of every other name/index pair.
"""
from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "name_key"]


def name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    key = (name_key(name),) + tuple(int(i) for i in index)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
