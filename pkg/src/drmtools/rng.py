# drmtools/rng.py
"""
Seeded random streams used by every sampler and initializer.

Generator: ``numpy.random.Philox`` (Philox 4x64, counter-based).

Stream split:
    split_seed(master, i)     -> int seed of trial i
                                 = SeedSequence(master, spawn_key=(i,)).generate_state(1, uint64)[0]
    child_rng(seed, k)        -> Philox generator on SeedSequence(seed, spawn_key=(k,))

Normals come from ``box_muller`` on the generator's uniform doubles rather than
numpy's ziggurat sampler, so the float pipeline is documented end to end.
"""
from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]

__all__ = ["make_rng", "child_rng", "split_seed", "box_muller"]


def _as_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Philox-backed generator for ``seed`` (int or SeedSequence)."""
    return np.random.Generator(np.random.Philox(_as_sequence(seed)))


def child_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent sub-stream ``stream`` of ``seed``; streams never overlap."""
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return make_rng(seq)


def split_seed(master: int, index: int) -> int:
    """Deterministic per-trial seed derived from a master seed."""
    seq = np.random.SeedSequence(int(master), spawn_key=(int(index),))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def box_muller(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normals of shape ``size`` via the Box–Muller transform."""
    shape = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
    count = int(np.prod(shape))
    half = (count + 1) // 2
    u1 = rng.random(half)
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 lies in (0, 1]
    angle = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return z[:count].reshape(shape)
