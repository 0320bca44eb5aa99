"""Counter-based, splittable random streams.

Trajectory ``k`` of an ensemble seeded with ``seed`` always draws from the
Philox stream keyed by ``SeedSequence(seed, spawn_key=(k,))``, so ensemble
members can be generated in any order, in any batch size, or one at a time,
and still come out identical.
"""

from __future__ import annotations

import numpy as np


def trajectory_rng(seed: int, index: int = 0) -> np.random.Generator:
    if seed is None:
        raise ValueError("a seed is required")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def uniform_block(seed: int, indices, n: int) -> np.ndarray:
    """Uniform draws, one row of ``n`` per trajectory index."""
    return np.stack([trajectory_rng(seed, k).random(n) for k in indices]) if len(indices) else np.empty((0, n))


def normal_block(seed: int, indices, n: int) -> np.ndarray:
    return np.stack([trajectory_rng(seed, k).standard_normal(n) for k in indices]) if len(indices) else np.empty((0, n))
