"""Discrete repeated-interaction dynamics with projective apparatus readout.

Each collision couples the system to a fresh apparatus qubit prepared in
``e0`` through the Floquet unitary ``V``; the qubit is then measured in the
basis of a :class:`MeasurementScheme` and the system state is conditioned
by the projection postulate.  Amplitude index convention for joint vectors
is ``system_index * 2 + apparatus_index`` (system factor first).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .ensemble import Ensemble, concat, grid_index, sample_indices
from .model import SystemModel, ito_coefficients, require_valid
from .numerics import (
    I2,
    NUMBER,
    SIGMA_MINUS,
    SIGMA_PLUS,
    ValidationError,
    apply_rows,
    as_cmatrix,
    dag,
    expm_skew,
    kron,
)
from .rng import trajectory_rng, uniform_block
from .trajio import write_trajectory_csv

PROB_FLOOR = 1e-14
NORM_TOL = 1e-8
MAX_STORED_STEPS = 100_000
MAX_QUBITS = 10
BATCH = 2048

E0 = np.array([1.0, 0.0], dtype=np.complex128)
E1 = np.array([0.0, 1.0], dtype=np.complex128)


@dataclass(frozen=True)
class MeasurementScheme:
    """Apparatus readout basis.

    ``sigma_x`` is the ``q = 1/2`` member of the ``general_q`` family and is
    built from the very same vectors, so both give identical trajectories.
    """

    kind: str
    q: float | None = None

    def __post_init__(self):
        if self.kind not in ("sigma_x", "general_q", "number"):
            raise ValidationError(f"unknown measurement scheme {self.kind!r}")
        if self.kind == "general_q":
            if self.q is None or not (0.0 < self.q < 1.0):
                raise ValidationError(f"general_q needs 0 < q < 1, got {self.q}")
        elif self.q is not None:
            raise ValidationError(f"{self.kind} takes no q parameter")

    @classmethod
    def sigma_x(cls) -> "MeasurementScheme":
        return cls("sigma_x")

    @classmethod
    def general_q(cls, q: float) -> "MeasurementScheme":
        return cls("general_q", float(q))

    @classmethod
    def number(cls) -> "MeasurementScheme":
        return cls("number")

    @property
    def diffusive(self) -> bool:
        return self.kind != "number"

    @property
    def q_plus(self) -> float:
        return 0.5 if self.kind == "sigma_x" else float(self.q)

    def basis(self) -> np.ndarray:
        """Rows are the apparatus eigenvectors, in outcome order."""
        if self.kind == "number":
            return np.stack([E0, E1])
        qp = self.q_plus
        qm = 1.0 - qp
        e_plus = math.sqrt(qp) * E0 + math.sqrt(qm) * E1
        e_minus = math.sqrt(qm) * E0 - math.sqrt(qp) * E1
        return np.stack([e_plus, e_minus])

    def values(self) -> np.ndarray:
        """Recorded value per outcome: weighted ``eta_+-`` or the count ``eps``."""
        if self.kind == "number":
            return np.array([0.0, 1.0])
        if self.kind == "sigma_x":
            return np.array([1.0, -1.0])
        qp = self.q_plus
        qm = 1.0 - qp
        return np.array([math.sqrt(qm / qp), -math.sqrt(qp / qm)])

    def labels(self) -> tuple[str, str]:
        return ("0", "1") if self.kind == "number" else ("+", "-")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.q is not None:
            out["q"] = self.q
        return out

    @classmethod
    def from_dict(cls, data) -> "MeasurementScheme":
        if isinstance(data, str):
            data = {"kind": data}
        return cls(data["kind"], data.get("q"))


def floquet_unitary(m: SystemModel, tau: float) -> np.ndarray:
    """``exp(-i tau H_tau)`` on system (x) apparatus, computed exactly."""
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    require_valid(m)
    rt = math.sqrt(tau)
    # tau * H_tau, with the 1/tau and 1/sqrt(tau) scalings already multiplied out
    gen = (
        kron(m.H11, NUMBER)
        + rt * (kron(m.H10, SIGMA_PLUS) + kron(m.H01, SIGMA_MINUS))
        + tau * kron(m.H00, I2)
    )
    gen = 0.5 * (gen + dag(gen))
    return expm_skew(-1j * gen)


def conditional_maps(V, scheme: MeasurementScheme) -> list[tuple[str, np.ndarray]]:
    """System maps ``V_o = (I (x) <e_o|) V (. (x) e0)``, one per outcome."""
    V = as_cmatrix(V, "V")
    d = V.shape[0] // 2
    if V.shape != (2 * d, 2 * d):
        raise ValidationError(f"V must be 2d x 2d, got {V.shape}")
    from_ground = V.reshape(d, 2, d, 2)[:, :, :, 0]  # [s, a, s']
    maps = []
    for label, e in zip(scheme.labels(), scheme.basis()):
        maps.append((label, np.einsum("a,sat->st", e.conj(), from_ground)))
    return maps


def completeness_residual(maps) -> float:
    ops = _stack(maps)
    total = sum(dag(op) @ op for op in ops)
    return float(np.linalg.norm(total - np.eye(ops.shape[1])))


def _stack(maps) -> np.ndarray:
    if isinstance(maps, np.ndarray):
        return maps
    return np.stack([op for _, op in maps]) if isinstance(maps[0], tuple) else np.stack(maps)


def outcome_probabilities(psi, maps) -> np.ndarray:
    ops = _stack(maps)
    branches = ops @ np.asarray(psi, dtype=np.complex128)
    return np.einsum("ki,ki->k", branches.conj(), branches).real


def _branch_batch(psis: np.ndarray, ops: np.ndarray, u: np.ndarray):
    """Inverse-CDF outcome selection for a batch of normalised states."""
    cand = np.einsum("kij,bj->bki", ops, psis)
    probs = np.einsum("bki,bki->bk", cand.conj(), cand).real
    total = probs.sum(axis=1)
    if np.any(np.abs(total - 1.0) > NORM_TOL):
        bad = float(np.max(np.abs(total - 1.0)))
        raise RuntimeError(f"conditional maps lost normalisation (defect {bad:.3e})")
    probs = np.where(probs < PROB_FLOOR, 0.0, probs)
    cum = np.cumsum(probs, axis=1)
    target = u * cum[:, -1]
    idx = np.sum(cum <= target[:, None], axis=1)
    k = probs.shape[1]
    last_live = k - 1 - np.argmax(probs[:, ::-1] > 0.0, axis=1)
    idx = np.minimum(idx, last_live)
    rows = np.arange(len(idx))
    p = probs[rows, idx]
    new = cand[rows, idx] / np.sqrt(p)[:, None]
    return idx, new, p


class StepResult(NamedTuple):
    outcome: int
    psi: np.ndarray
    prob: float


def discrete_step(psi, maps, rng: np.random.Generator) -> StepResult:
    """One collision and readout: sample ``o`` with ``p_o = ||V_o psi||^2``.

    Returns the outcome index, the conditioned state ``V_o psi / sqrt(p_o)``
    and ``p_o``.  Exactly one uniform is drawn from ``rng``.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValidationError("psi must be normalised")
    u = np.array([rng.random()])
    idx, new, p = _branch_batch(psi[None, :], _stack(maps), u)
    return StepResult(int(idx[0]), new[0], float(p[0]))


@dataclass
class DiscreteTrajectory:
    """One discrete trajectory on the grid ``j * tau``.

    Per-step arrays (``outcomes``, ``values``, ``probs``) have length ``n``;
    grid arrays have length ``n + 1``.  ``lambdas``/``nus`` are evaluated on
    the stored normalised state at each grid point.
    """

    tau: float
    scheme: MeasurementScheme
    times: np.ndarray
    state_times: np.ndarray
    states: np.ndarray
    outcomes: np.ndarray
    values: np.ndarray
    probs: np.ndarray
    lambdas: np.ndarray
    nus: np.ndarray
    q_raw: np.ndarray | None = None
    q_hat: np.ndarray | None = None
    n_count: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return len(self.outcomes)

    def state_at(self, t: float) -> np.ndarray:
        hits = np.flatnonzero(np.abs(self.state_times - t) <= 1e-9 * max(1.0, abs(t)))
        if hits.size == 0:
            raise ValidationError(f"no stored state at t={t}")
        return self.states[hits[0]]

    def csv_columns(self) -> dict:
        cols = {"outcome": self.outcomes, "eta_or_eps": self.values, "prob": self.probs}
        if self.scheme.diffusive:
            cols["q_raw"] = self.q_raw
            cols["q_hat"] = self.q_hat
        else:
            cols["n_count"] = self.n_count
            cols["jump_time"] = [t if e else None for t, e in zip(self.times[1:], self.values)]
        return cols

    def to_csv(self, path, include_amplitudes: bool = True):
        if len(self.state_times) != len(self.times):
            include_amplitudes = False
        return write_trajectory_csv(
            path, self.times, self.states, self.csv_columns(), include_amplitudes
        )


def _prepare(m: SystemModel, scheme: MeasurementScheme, tau: float, T: float, psi0):
    c = ito_coefficients(m)
    V = floquet_unitary(m, tau)
    ops = _stack(conditional_maps(V, scheme))
    n = grid_index(T, tau)
    if n < 1:
        raise ValidationError(f"horizon T={T} is shorter than one step tau={tau}")
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (m.dim,):
        raise ValidationError(f"psi0 must have shape ({m.dim},), got {psi0.shape}")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValidationError("psi0 must be normalised")
    return c, ops, n, psi0


def _lam_nu(psis: np.ndarray, L: np.ndarray):
    Lpsi = apply_rows(L, psis)
    lam = np.einsum("bi,bi->b", psis.conj(), Lpsi).real
    nu = np.einsum("bi,bi->b", Lpsi.conj(), Lpsi).real
    return lam, nu


def _run_batch(ops, values, L, tau, n, psi0, u, sample_idx, full, keep_increments, diffusive):
    """March a batch of trajectories through ``n`` collisions.

    ``u`` holds one uniform per trajectory and step.  With ``full`` every
    grid point is stored; otherwise only the grid indices in ``sample_idx``.
    """
    b = u.shape[0]
    rt = math.sqrt(tau)
    psis = np.tile(psi0, (b, 1))
    record = np.zeros(b)  # q_raw or n_count
    comp = np.zeros(b)  # q_hat or compensated count
    sample_pos = {int(j): i for i, j in enumerate(sample_idx)}
    n_samples = len(sample_idx)
    d = psi0.size
    out = {
        "states": np.empty((b, n + 1 if full else n_samples, d), dtype=np.complex128),
        "record": np.empty((b, n + 1 if full else n_samples)),
        "comp": np.empty((b, n + 1 if full else n_samples)),
        "increments": np.empty((b, n)) if keep_increments else None,
    }
    if full:
        out.update(
            outcomes=np.empty((b, n), dtype=np.int64),
            probs=np.empty((b, n)),
            lambdas=np.empty((b, n + 1)),
            nus=np.empty((b, n + 1)),
        )

    def store(j, lam, nu):
        if full:
            out["states"][:, j] = psis
            out["record"][:, j] = record
            out["comp"][:, j] = comp
            out["lambdas"][:, j] = lam
            out["nus"][:, j] = nu
        else:
            # a grid index may be requested more than once
            for i, jj in enumerate(sample_idx):
                if jj == j:
                    out["states"][:, i] = psis
                    out["record"][:, i] = record
                    out["comp"][:, i] = comp

    lam, nu = _lam_nu(psis, L)
    if full or 0 in sample_pos:
        store(0, lam, nu)
    for j in range(n):
        idx, psis, p = _branch_batch(psis, ops, u[:, j])
        val = values[idx]
        if diffusive:
            # zeta_j = eta_j - 2 sqrt(tau) lambda_{j-1}, lambda from the pre-step state
            inc_hat = rt * val - 2.0 * tau * lam
            record = record + rt * val
        else:
            inc_hat = val - tau * nu
            record = record + val
        comp = comp + inc_hat
        if keep_increments:
            out["increments"][:, j] = inc_hat
        if full:
            out["outcomes"][:, j] = idx
            out["probs"][:, j] = p
        lam, nu = _lam_nu(psis, L)
        if full or (j + 1) in sample_pos:
            store(j + 1, lam, nu)
    return out


def run_discrete_trajectory(
    m: SystemModel,
    scheme: MeasurementScheme,
    tau: float,
    T: float,
    psi0,
    seed: int,
    index: int = 0,
    sample_times=None,
) -> DiscreteTrajectory:
    """Iterate ``floor(T/tau)`` collisions with projective readout.

    Deterministic in ``(seed, index)``; the result equals member ``index``
    of :func:`run_discrete_ensemble` with the same seed.  States are kept at
    every step up to ``1e5`` steps, beyond that only at ``sample_times``.
    """
    c, ops, n, psi0 = _prepare(m, scheme, tau, T, psi0)
    values = scheme.values()
    u = trajectory_rng(seed, index).random(n)[None, :]
    if n > MAX_STORED_STEPS and sample_times is None:
        raise ValidationError(f"{n} steps exceed {MAX_STORED_STEPS}; pass sample_times")
    out = _run_batch(ops, values, c.L, tau, n, psi0, u, np.arange(n + 1), True, False, scheme.diffusive)
    times = np.arange(n + 1) * tau
    states = out["states"][0]
    state_times = times
    if n > MAX_STORED_STEPS:
        keep = sample_indices(sample_times, tau, n)
        states, state_times = states[keep], times[keep]
    outcomes = out["outcomes"][0]
    traj = DiscreteTrajectory(
        tau=tau,
        scheme=scheme,
        times=times,
        state_times=state_times,
        states=states,
        outcomes=outcomes,
        values=values[outcomes],
        probs=out["probs"][0],
        lambdas=out["lambdas"][0],
        nus=out["nus"][0],
    )
    if scheme.diffusive:
        traj.q_raw = out["record"][0]
        traj.q_hat = out["comp"][0]
    else:
        traj.n_count = out["record"][0]
    return traj


def run_discrete_ensemble(
    m: SystemModel,
    scheme: MeasurementScheme,
    tau: float,
    T: float,
    psi0,
    n_traj: int,
    seed: int,
    sample_times=None,
    keep_increments: bool = False,
) -> Ensemble:
    """Run ``n_traj`` independent trajectories, storing states at ``sample_times``.

    ``sample_times`` defaults to ``(0, T)``.  For diffusive schemes ``q`` and
    ``q_hat`` are filled, for the number scheme ``counts``; with
    ``keep_increments`` the per-step compensated increments are kept.
    """
    c, ops, n, psi0 = _prepare(m, scheme, tau, T, psi0)
    if sample_times is None:
        sample_times = (0.0, n * tau)
    sidx = sample_indices(sample_times, tau, n)
    values = scheme.values()
    parts = []
    for start in range(0, n_traj, BATCH):
        members = range(start, min(n_traj, start + BATCH))
        u = uniform_block(seed, members, n)
        parts.append(
            _run_batch(ops, values, c.L, tau, n, psi0, u, sidx, False, keep_increments, scheme.diffusive)
        )
    cat = concat(parts, ("states", "record", "comp", "increments"))
    ens = Ensemble(
        kind=f"discrete-{scheme.kind}",
        step=tau,
        n_steps=n,
        seed=seed,
        psi0=psi0,
        sample_times=sidx * tau,
        states=cat["states"],
        increments=cat["increments"],
    )
    if scheme.diffusive:
        ens.q, ens.q_hat = cat["record"], cat["comp"]
    else:
        ens.counts = cat["record"]
    return ens


def single_step_outcomes(m: SystemModel, scheme: MeasurementScheme, tau: float, psi, n: int, seed: int):
    """Recorded values of ``n`` independent single collisions from the same ``psi``.

    Returns ``(values, probs)`` where ``probs`` are the exact outcome
    probabilities for ``psi``.
    """
    V = floquet_unitary(m, tau)
    ops = _stack(conditional_maps(V, scheme))
    psi = np.asarray(psi, dtype=np.complex128)
    u = trajectory_rng(seed, 0).random(n)
    idx, _, _ = _branch_batch(np.tile(psi, (n, 1)), ops, u)
    return scheme.values()[idx], outcome_probabilities(psi, ops)


def branch_average(maps, psi0, n_steps: int) -> np.ndarray:
    """Exact average of ``psi psi^dagger`` over all outcome branches.

    Each branch contributes ``p * psi psi^dagger = phi phi^dagger`` with
    ``phi`` the unnormalised conditioned vector.
    """
    ops = _stack(maps)
    phis = np.asarray(psi0, dtype=np.complex128)[None, :]
    for _ in range(n_steps):
        phis = np.einsum("kij,bj->bki", ops, phis).reshape(-1, ops.shape[1])
    return phis.T @ phis.conj()


def unconditioned_state(V, rho0, n_steps: int) -> np.ndarray:
    """Reduced system state after ``n_steps`` collisions, apparatus traced out."""
    V = as_cmatrix(V, "V")
    d = V.shape[0] // 2
    rho = as_cmatrix(rho0, "rho0")
    ground = np.outer(E0, E0.conj())
    for _ in range(n_steps):
        joint = V @ kron(rho, ground) @ dag(V)
        rho = _partial_trace_apparatus(joint, d)
    return rho


def _partial_trace_apparatus(joint: np.ndarray, d: int) -> np.ndarray:
    return np.einsum("sata->st", joint.reshape(d, 2, d, 2))


# ---------------------------------------------------------------------------
# Collective apparatus operators on an explicit n-qubit chain


def _site_op(op: np.ndarray, site: int, n: int) -> np.ndarray:
    ops = [I2] * n
    ops[site] = op
    return kron(*ops)


def collective_operators(n_qubits: int, tau: float, t: float):
    """``A+(t;tau)``, ``A-(t;tau)`` and ``Lambda(t;tau)`` on ``(C^2)^n``.

    Sites ``k = 1..floor(t/tau)`` contribute; an empty sum gives zero.
    """
    if n_qubits > MAX_QUBITS:
        raise ValidationError(f"n_qubits={n_qubits} exceeds the memory guard of {MAX_QUBITS}")
    m = grid_index(t, tau)
    if m > n_qubits:
        raise ValidationError(f"floor(t/tau)={m} exceeds the chain length {n_qubits}")
    dim = 2**n_qubits
    a_plus = np.zeros((dim, dim), dtype=np.complex128)
    a_minus = np.zeros((dim, dim), dtype=np.complex128)
    gauge = np.zeros((dim, dim), dtype=np.complex128)
    for k in range(m):
        a_plus += _site_op(SIGMA_PLUS, k, n_qubits)
        a_minus += _site_op(SIGMA_MINUS, k, n_qubits)
        gauge += _site_op(NUMBER, k, n_qubits)
    rt = math.sqrt(tau)
    return rt * a_plus, rt * a_minus, gauge


def collective_commutator_check(n_qubits: int, tau: float, t: float, s: float) -> dict[str, float]:
    """Residuals of the collective-operator commutation relations.

    ``[A-(t), A+(s)] = tau floor(t^s / tau) - 2 tau Lambda(t^s)`` and
    ``[Lambda(t), A+-(s)] = +-A+-(t^s)``, plus the single-site relations
    ``{s-, s+} = 1`` and ``(s+-)^2 = 0``.
    """
    ap_t, am_t, lam_t = collective_operators(n_qubits, tau, t)
    ap_s, am_s, _ = collective_operators(n_qubits, tau, s)
    u = min(t, s)
    ap_u, am_u, lam_u = collective_operators(n_qubits, tau, u)
    eye = np.eye(2**n_qubits)

    def comm(a, b):
        return a @ b - b @ a

    m_u = grid_index(u, tau)
    return {
        "A-A+": float(np.max(np.abs(comm(am_t, ap_s) - (tau * m_u * eye - 2 * tau * lam_u)))),
        "Lambda,A+": float(np.max(np.abs(comm(lam_t, ap_s) - ap_u))),
        "Lambda,A-": float(np.max(np.abs(comm(lam_t, am_s) + am_u))),
        "anticomm": float(np.max(np.abs(SIGMA_MINUS @ SIGMA_PLUS + SIGMA_PLUS @ SIGMA_MINUS - I2))),
        "nilpotent": float(max(np.max(np.abs(SIGMA_PLUS @ SIGMA_PLUS)), np.max(np.abs(SIGMA_MINUS @ SIGMA_MINUS)))),
    }
