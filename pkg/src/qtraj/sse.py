"""Continuous-time stochastic Schrodinger equations and the master equation.

Three unravelings are integrated on a fixed grid with explicit
renormalisation after every step:

* diffusive (Euler-Maruyama in the innovation ``dq_hat ~ N(0, dt)``),
* jumps with intensity ``nu = <L^dag L>`` resolved to the grid,
* jumps of the displaced coupling ``L + f`` with intensity ``<(L+f)^dag (L+f)>``.

``master_evolve`` propagates the Lindblad equation exactly and is the
reference every ensemble average is compared against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .ensemble import Ensemble, concat, grid_index, sample_indices
from .model import LindbladGenerator
from .numerics import ValidationError, apply_rows, as_cmatrix, dag, hermiticity_residual, unvec, vec
from .rng import normal_block, trajectory_rng, uniform_block
from .trajio import write_trajectory_csv

NU_FLOOR = 1e-12
MAX_JUMP_PROB = 0.1
BATCH = 2048


@dataclass
class SseTrajectory:
    """A single continuous-time trajectory on the grid ``j * dt``.

    ``noise`` is the per-step innovation ``dq_hat`` (diffusive) or the 0/1
    jump indicator (jump kinds).  ``drive`` is the output path ``q`` or the
    counting path ``n``; ``compensated`` is ``q_hat`` or ``n - int(intensity)``.
    ``intensity`` is ``lambda`` for diffusive runs and the jump rate otherwise.
    ``defects`` are the per-step norm errors before renormalisation.
    """

    kind: str
    dt: float
    times: np.ndarray
    states: np.ndarray
    noise: np.ndarray
    drive: np.ndarray
    compensated: np.ndarray
    lambdas: np.ndarray
    intensity: np.ndarray
    defects: np.ndarray
    probs: np.ndarray

    @property
    def jump_times(self) -> np.ndarray:
        if self.kind == "diffusive":
            return np.empty(0)
        return self.times[1:][self.noise.astype(bool)]

    @property
    def n_steps(self) -> int:
        return len(self.noise)

    def csv_columns(self) -> dict:
        if self.kind == "diffusive":
            dq = np.diff(self.drive)
            return {
                "eta_or_eps": dq / math.sqrt(self.dt),
                "q_raw": self.drive,
                "q_hat": self.compensated,
            }
        jumps = self.noise.astype(int)
        return {
            "outcome": jumps,
            "eta_or_eps": jumps,
            "n_count": self.drive,
            "jump_time": [t if j else None for t, j in zip(self.times[1:], jumps)],
            "prob": self.probs,
        }

    def to_csv(self, path, include_amplitudes: bool = True):
        return write_trajectory_csv(path, self.times, self.states, self.csv_columns(), include_amplitudes)


def _check_inputs(H, L, psi0, T, dt):
    H = as_cmatrix(H, "H")
    L = as_cmatrix(L, "L")
    if hermiticity_residual(H) > 1e-10 * max(1.0, float(np.linalg.norm(H))):
        raise ValidationError("H must be Hermitian")
    if L.shape != H.shape:
        raise ValidationError(f"L has shape {L.shape}, H has {H.shape}")
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (H.shape[0],):
        raise ValidationError(f"psi0 must have shape ({H.shape[0]},)")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValidationError("psi0 must be normalised")
    n = grid_index(T, dt)
    if n < 1:
        raise ValidationError(f"horizon T={T} is shorter than one step dt={dt}")
    return H, L, psi0, n


def _offset_values(f, times) -> np.ndarray:
    if callable(f):
        return np.array([float(f(t)) for t in times])
    return np.full(len(times), float(f))


class _Stepper:
    """Batched one-step update for one of the three unravelings."""

    def __init__(self, kind: str, H, L, dt: float, offsets: np.ndarray | None = None):
        self.kind = kind
        self.H = H
        self.L = L
        self.LdL = dag(L) @ L
        self.dt = dt
        self.offsets = offsets
        self.eye = np.eye(H.shape[0])

    def observe(self, psis, j):
        Lpsi = apply_rows(self.L, psis)
        lam = np.einsum("bi,bi->b", psis.conj(), Lpsi).real
        nu = np.einsum("bi,bi->b", Lpsi.conj(), Lpsi).real
        if self.kind == "diffusive":
            return lam, lam, Lpsi
        if self.kind == "jump":
            return lam, nu, Lpsi
        f = self.offsets[j]
        return lam, nu + 2.0 * f * lam + f * f, Lpsi

    def step(self, psis, j, draw, lam, rate, Lpsi):
        """Return new states, innovation/jump increment, defect and branch probability."""
        dt = self.dt
        Hpsi = apply_rows(self.H, psis)
        LdLpsi = apply_rows(self.LdL, psis)
        if self.kind == "diffusive":
            dqh = math.sqrt(dt) * draw
            lam_c = lam[:, None]
            drift = -1j * Hpsi - 0.5 * (LdLpsi - 2.0 * lam_c * Lpsi + lam_c**2 * psis)
            new = psis + (Lpsi - lam_c * psis) * dqh[:, None] + drift * dt
            norm = np.linalg.norm(new, axis=1)
            return new / norm[:, None], dqh, np.abs(norm - 1.0), np.full(len(psis), np.nan)

        f = 0.0 if self.kind == "jump" else self.offsets[j]
        nu = rate - 2.0 * f * lam - f * f
        jump_prob = rate * dt
        live = rate >= NU_FLOOR
        jumped = live & (draw < jump_prob)
        # continuous part: -iH - L^dag L / 2 - f L + (nu + 2 f lam) / 2
        drift = -1j * Hpsi - 0.5 * LdLpsi - f * Lpsi + 0.5 * (nu + 2.0 * f * lam)[:, None] * psis
        new = psis + drift * dt
        kicked = (Lpsi + f * psis) / np.sqrt(np.where(live, rate, 1.0))[:, None]
        new = np.where(jumped[:, None], kicked, new)
        norm = np.linalg.norm(new, axis=1)
        prob = np.where(jumped, jump_prob, 1.0 - np.where(live, jump_prob, 0.0))
        return new / norm[:, None], jumped.astype(float), np.abs(norm - 1.0), prob


def _march(stepper: _Stepper, psi0, n, draws, sample_idx, full, keep_increments, keep_jumps):
    b = draws.shape[0]
    dt = stepper.dt
    psis = np.tile(psi0, (b, 1))
    drive = np.zeros(b)
    comp = np.zeros(b)
    first_jump = np.full(b, np.nan)
    width = n + 1 if full else len(sample_idx)
    d = psi0.size
    out = {
        "states": np.empty((b, width, d), dtype=np.complex128),
        "drive": np.empty((b, width)),
        "comp": np.empty((b, width)),
        "increments": np.empty((b, n)) if (keep_increments or full) else None,
        "jump_flags": np.zeros((b, n), dtype=bool) if (keep_jumps and stepper.kind != "diffusive") else None,
    }
    if full:
        out.update(
            lambdas=np.empty((b, n + 1)),
            intensity=np.empty((b, n + 1)),
            defects=np.empty((b, n)),
            probs=np.empty((b, n)),
        )
    wanted = set(int(j) for j in sample_idx)

    def store(j, lam, rate):
        cols = [j] if full else [i for i, jj in enumerate(sample_idx) if jj == j]
        for c in cols:
            out["states"][:, c] = psis
            out["drive"][:, c] = drive
            out["comp"][:, c] = comp
        if full:
            out["lambdas"][:, j] = lam
            out["intensity"][:, j] = rate

    lam, rate, Lpsi = stepper.observe(psis, 0)
    if full or 0 in wanted:
        store(0, lam, rate)
    for j in range(n):
        psis, inc, defect, prob = stepper.step(psis, j, draws[:, j], lam, rate, Lpsi)
        if stepper.kind == "diffusive":
            drive = drive + inc + 2.0 * lam * dt
            comp = comp + inc
            stored_inc = inc
        else:
            drive = drive + inc
            comp = comp + inc - rate * dt
            stored_inc = inc - rate * dt
            hit = (inc > 0) & np.isnan(first_jump)
            first_jump[hit] = (j + 1) * dt
            if out["jump_flags"] is not None:
                out["jump_flags"][:, j] = inc > 0
        if out["increments"] is not None:
            out["increments"][:, j] = inc if full else stored_inc
        if full:
            out["defects"][:, j] = defect
            out["probs"][:, j] = prob
        lam, rate, Lpsi = stepper.observe(psis, j + 1)
        if full or (j + 1) in wanted:
            store(j + 1, lam, rate)
    out["first_jump"] = first_jump
    return out


def _setup(kind, H, L, psi0, T, dt, f):
    H, L, psi0, n = _check_inputs(H, L, psi0, T, dt)
    offsets = None
    if kind == "jump_offset":
        offsets = _offset_values(f, np.arange(n + 1) * dt)
        if np.min(offsets) <= 0:
            raise ValidationError(f"offset f must stay positive, min f = {np.min(offsets):.3e}")
    if kind != "diffusive":
        fs = np.zeros(1) if offsets is None else np.unique(offsets)
        eye = np.eye(H.shape[0])
        worst = max(np.linalg.norm(L + fv * eye, 2) ** 2 for fv in fs)
        if worst * dt > MAX_JUMP_PROB:
            raise ValidationError(
                f"dt * max jump rate = {worst * dt:.3g} exceeds {MAX_JUMP_PROB}; use a smaller dt"
            )
    return _Stepper(kind, H, L, dt, offsets), psi0, n


def _draws(kind, seed, members, n):
    if kind == "diffusive":
        return normal_block(seed, members, n)
    return uniform_block(seed, members, n)


def _single(kind, H, L, psi0, T, dt, seed, index, f=None) -> SseTrajectory:
    stepper, psi0, n = _setup(kind, H, L, psi0, T, dt, f)
    rng = trajectory_rng(seed, index)
    draws = (rng.standard_normal(n) if kind == "diffusive" else rng.random(n))[None, :]
    out = _march(stepper, psi0, n, draws, np.arange(n + 1), True, True, False)
    return SseTrajectory(
        kind=kind,
        dt=dt,
        times=np.arange(n + 1) * dt,
        states=out["states"][0],
        noise=out["increments"][0],
        drive=out["drive"][0],
        compensated=out["comp"][0],
        lambdas=out["lambdas"][0],
        intensity=out["intensity"][0],
        defects=out["defects"][0],
        probs=out["probs"][0],
    )


def integrate_diffusive(H, L, psi0, T: float, dt: float, seed: int, index: int = 0) -> SseTrajectory:
    """Euler-Maruyama integration of the diffusive SSE with renormalisation.

    ``dpsi = (L - lam) psi dq_hat + [-iH - (L^dag L - 2 lam L + lam^2)/2] psi dt``
    with ``lam = Re<psi|L psi>`` taken from the current normalised state.
    """
    return _single("diffusive", H, L, psi0, T, dt, seed, index)


def integrate_jump(H, L, psi0, T: float, dt: float, seed: int, index: int = 0) -> SseTrajectory:
    """Counting-process SSE with jumps resolved to the grid.

    Per step a jump ``psi -> L psi / ||L psi||`` happens with probability
    ``nu dt``; otherwise ``dpsi = (-iH - L^dag L / 2 + nu / 2) psi dt``.
    """
    return _single("jump", H, L, psi0, T, dt, seed, index)


def integrate_jump_offset(
    H, L, f: float | Callable[[float], float], psi0, T: float, dt: float, seed: int, index: int = 0
) -> SseTrajectory:
    """Jump SSE for the displaced counting process with offset ``f(t) > 0``.

    Jumps ``psi -> (L + f) psi / sqrt(mu)`` occur at rate
    ``mu = nu + 2 f lam + f^2``; between jumps
    ``dpsi = [-iH - L^dag L / 2 - f L + (nu + 2 f lam) / 2] psi dt``.
    """
    return _single("jump_offset", H, L, psi0, T, dt, seed, index, f)


def run_sse_ensemble(
    kind: str,
    H,
    L,
    psi0,
    T: float,
    dt: float,
    n_traj: int,
    seed: int,
    f=None,
    sample_times=None,
    keep_increments: bool = False,
    keep_jumps: bool = False,
) -> Ensemble:
    """Batched ensemble of one unraveling; member ``k`` matches ``index=k``.

    ``kind`` is ``"diffusive"``, ``"jump"`` or ``"jump_offset"``.
    """
    if kind not in ("diffusive", "jump", "jump_offset"):
        raise ValidationError(f"unknown SSE kind {kind!r}")
    stepper, psi0, n = _setup(kind, H, L, psi0, T, dt, f)
    if sample_times is None:
        sample_times = (0.0, n * dt)
    sidx = sample_indices(sample_times, dt, n)
    parts = []
    for start in range(0, n_traj, BATCH):
        members = range(start, min(n_traj, start + BATCH))
        draws = _draws(kind, seed, members, n)
        parts.append(_march(stepper, psi0, n, draws, sidx, False, keep_increments, keep_jumps))
    cat = concat(parts, ("states", "drive", "comp", "increments", "jump_flags", "first_jump"))
    ens = Ensemble(
        kind=kind,
        step=dt,
        n_steps=n,
        seed=seed,
        psi0=psi0,
        sample_times=sidx * dt,
        states=cat["states"],
        increments=cat["increments"],
    )
    if kind == "diffusive":
        ens.q, ens.q_hat = cat["drive"], cat["comp"]
    else:
        ens.counts = cat["drive"]
        ens.jump_flags = cat["jump_flags"]
        ens.first_jump = cat["first_jump"]
    return ens


def no_jump_generator(H, L, psi, f: float = 0.0) -> np.ndarray:
    """Matrix of the deterministic between-jump drift at state ``psi``.

    ``-iH - L^dag L / 2 - f L + (nu + 2 f lam) / 2``; ``f = 0`` gives the
    plain jump SSE.
    """
    H = as_cmatrix(H, "H")
    L = as_cmatrix(L, "L")
    psi = np.asarray(psi, dtype=np.complex128)
    lam = float(np.vdot(psi, L @ psi).real)
    nu = float(np.linalg.norm(L @ psi) ** 2)
    eye = np.eye(H.shape[0])
    return -1j * H - 0.5 * dag(L) @ L - f * L + 0.5 * (nu + 2.0 * f * lam) * eye


def validate_density(rho, tol: float = 1e-10) -> np.ndarray:
    rho = as_cmatrix(rho, "rho")
    if hermiticity_residual(rho) > tol:
        raise ValidationError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValidationError(f"density matrix has trace {np.trace(rho).real:.12g}")
    if np.min(np.linalg.eigvalsh(rho)) < -tol:
        raise ValidationError("density matrix is not positive semidefinite")
    return rho


def master_evolve(gen: LindbladGenerator, rho0, t: float) -> np.ndarray:
    """``rho_t = exp(t * Lindbladian) rho0`` by matrix exponential of the vectorised generator."""
    rho0 = validate_density(rho0)
    if t == 0:
        return rho0.copy()
    prop = scipy.linalg.expm(t * gen.matrix_rep)
    return unvec(prop @ vec(rho0), gen.dim)


def master_expectation(gen: LindbladGenerator, rho0, X, t: float) -> float:
    return float(np.trace(as_cmatrix(X) @ master_evolve(gen, rho0, t)).real)


def integrated_expectation(gen: LindbladGenerator, rho0, X, T: float, nodes: int = 100) -> float:
    """``int_0^T tr(X rho_s) ds`` by Gauss-Legendre quadrature over ``master_evolve``."""
    if T <= 0:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * T * (x + 1.0)
    vals = [master_expectation(gen, rho0, X, si) for si in s]
    return float(0.5 * T * np.dot(w, vals))
