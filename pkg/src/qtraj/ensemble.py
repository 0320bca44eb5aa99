"""Containers shared by the discrete and continuous-time samplers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ValidationError

# Grid indices are floor(t / step) with a small guard against 0.3/0.1 = 2.999...
_FLOOR_GUARD = 1e-9


def grid_index(t: float, step: float) -> int:
    return int(np.floor(t / step + _FLOOR_GUARD))


def sample_indices(sample_times, step: float, n_steps: int) -> np.ndarray:
    idx = np.array([grid_index(t, step) for t in np.atleast_1d(sample_times)], dtype=int)
    if np.any(idx < 0) or np.any(idx > n_steps):
        raise ValidationError(f"sample times must lie in [0, {n_steps * step}]")
    return idx


@dataclass
class Ensemble:
    """States and output records of ``n_traj`` trajectories at a few sample times.

    ``q``/``q_hat`` hold the diffusive output path and its compensated
    version, ``counts`` the counting path; whichever does not apply is None.
    ``increments`` (the per-step ``dq_hat``) and ``jump_flags`` are kept only
    on request since they scale with the number of steps.
    """

    kind: str
    step: float
    n_steps: int
    seed: int
    psi0: np.ndarray
    sample_times: np.ndarray
    states: np.ndarray
    q: np.ndarray | None = None
    q_hat: np.ndarray | None = None
    counts: np.ndarray | None = None
    increments: np.ndarray | None = None
    jump_flags: np.ndarray | None = None
    first_jump: np.ndarray | None = None

    @property
    def n_traj(self) -> int:
        return self.states.shape[0]

    def sample_index(self, t: float) -> int:
        hits = np.flatnonzero(np.abs(self.sample_times - t) <= 1e-9 * max(1.0, abs(t)))
        if hits.size == 0:
            raise ValidationError(f"time {t} is not one of the sampled times {self.sample_times}")
        return int(hits[0])

    def states_at(self, t: float) -> np.ndarray:
        return self.states[:, self.sample_index(t), :]


def concat(parts: list[dict], keys) -> dict:
    out = {}
    for key in keys:
        vals = [p[key] for p in parts]
        out[key] = None if vals[0] is None else np.concatenate(vals, axis=0)
    return out
