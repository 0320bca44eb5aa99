"""Ensemble estimators and the pass/fail checks built on them.

Every reference value comes from ``master_evolve`` or a closed form, never
from a sampled quantity, so each check compares two independent routes.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.stats

from .discrete import MeasurementScheme, run_discrete_ensemble
from .ensemble import Ensemble
from .model import LindbladGenerator, SystemModel, ito_coefficients, lindblad_generator
from .numerics import ValidationError, as_cmatrix, dag
from .sse import integrated_expectation, master_expectation, run_sse_ensemble

MIN_SAMPLES = 100
KS_ALPHA = 0.01


@dataclass
class Check:
    estimator: str
    value: float
    stderr: float
    reference: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return out


@dataclass
class EnsembleReport:
    n_traj: int
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, estimator, value, stderr, reference, tolerance, passed=None) -> Check:
        if passed is None:
            passed = abs(value - reference) <= tolerance
        chk = Check(estimator, float(value), float(stderr), float(reference), float(tolerance), bool(passed))
        self.checks.append(chk)
        return chk

    def __getitem__(self, estimator: str) -> Check:
        for c in self.checks:
            if c.estimator == estimator:
                return c
        raise KeyError(estimator)

    def to_dict(self) -> dict:
        return {"n_traj": self.n_traj, "pass": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            out.append(
                f"{status} {c.estimator}: value={c.value:.6g} ref={c.reference:.6g} "
                f"stderr={c.stderr:.3g} tol={c.tolerance:.3g}"
            )
        return out


def mean_and_stderr(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    n = x.size
    mean = float(np.sum(x) / n)
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(x, ddof=1) / math.sqrt(n))


def _pairwise_mean(x: np.ndarray) -> np.ndarray:
    # reduce along a contiguous last axis so numpy uses pairwise summation
    flat = np.ascontiguousarray(x.reshape(x.shape[0], -1).T)
    return flat.sum(axis=1) / x.shape[0]


def ensemble_density(trajs, t: float) -> np.ndarray:
    """``(1/N) sum_k psi_k(t) psi_k(t)^dagger`` over an ensemble or a list of trajectories."""
    if isinstance(trajs, Ensemble):
        psis = trajs.states_at(t)
    else:
        psis = np.stack([_state_at(tr, t) for tr in trajs])
    outer = psis[:, :, None] * psis[:, None, :].conj()
    d = psis.shape[1]
    rho = _pairwise_mean(outer).reshape(d, d)
    return 0.5 * (rho + dag(rho))


def _state_at(traj, t: float) -> np.ndarray:
    if hasattr(traj, "state_at"):
        return traj.state_at(t)
    times = np.asarray(traj.times)
    hits = np.flatnonzero(np.abs(times - t) <= 1e-9 * max(1.0, abs(t)))
    if hits.size == 0:
        raise ValidationError(f"time {t} is off the trajectory grid")
    return traj.states[hits[0]]


def ensemble_expectation(ens: Ensemble, X, t: float) -> tuple[float, float]:
    """Mean of ``<psi_t|X psi_t>`` across trajectories, with its standard error."""
    psis = ens.states_at(t)
    vals = np.einsum("bi,ij,bj->b", psis.conj(), as_cmatrix(X), psis).real
    return mean_and_stderr(vals)


def martingale_test(increments, dt: float, ks: bool = True) -> EnsembleReport:
    """Check that summed increments look like a standard Wiener process at ``T``.

    ``increments`` has shape ``(N, n_steps)``.  The sample mean of
    ``q_hat_T`` must lie within 3 standard errors of 0 and its sample variance
    within ``T (1 +- 5/sqrt(N))``.  With ``ks`` the increments rescaled by
    ``sqrt(dt)`` are KS-tested against N(0, 1) at significance 0.01.
    """
    inc = np.atleast_2d(np.asarray(increments, dtype=float))
    n, steps = inc.shape
    if n < MIN_SAMPLES:
        raise ValidationError(f"martingale_test needs at least {MIN_SAMPLES} trajectories, got {n}")
    T = steps * dt
    q_T = inc.sum(axis=1)
    mean, se = mean_and_stderr(q_T)
    report = EnsembleReport(n_traj=n)
    report.add("mean q_hat(T)", mean, se, 0.0, 3.0 * se)
    var = float(np.var(q_T, ddof=1))
    report.add("var q_hat(T)", var, T * math.sqrt(2.0 / (n - 1)), T, 5.0 * T / math.sqrt(n))
    if ks:
        flat = inc.ravel()
        # cap the sample so the KS step stays cheap; striding keeps it spread over all steps
        stride = max(1, flat.size // 200_000)
        z = flat[::stride] / math.sqrt(dt)
        res = scipy.stats.kstest(z, "norm")
        report.add("ks normal increments p", res.pvalue, float(res.statistic), KS_ALPHA, 0.0, res.pvalue >= KS_ALPHA)
    return report


def counting_test(counts, gen: LindbladGenerator, rho0, T: float) -> EnsembleReport:
    """Compare the mean number of jumps by ``T`` with ``int_0^T tr(rho_s L^dag L) ds``."""
    counts = np.asarray(counts, dtype=float).ravel()
    if counts.size < MIN_SAMPLES:
        raise ValidationError(f"counting_test needs at least {MIN_SAMPLES} trajectories, got {counts.size}")
    ref = integrated_expectation(gen, rho0, dag(gen.L) @ gen.L, T)
    mean, se = mean_and_stderr(counts)
    report = EnsembleReport(n_traj=counts.size)
    report.add("mean n(T)", mean, se, ref, max(3.0 * se, 1e-12))
    return report


def output_drift_test(q_T, gen: LindbladGenerator, rho0, T: float) -> EnsembleReport:
    """Compare ``E[q_T]`` with ``2 int_0^T E[lambda_s] ds = int tr(rho_s (L + L^dag)) ds``."""
    q_T = np.asarray(q_T, dtype=float).ravel()
    ref = integrated_expectation(gen, rho0, gen.L + dag(gen.L), T)
    mean, se = mean_and_stderr(q_T)
    report = EnsembleReport(n_traj=q_T.size)
    report.add("mean q(T)", mean, se, ref, max(3.0 * se, 1e-12))
    return report


def exponential_ks_test(times, rate: float = 1.0, horizon: float | None = None) -> EnsembleReport:
    """KS test of event times against Exponential(rate), truncated to ``[0, horizon]`` if given."""
    times = np.asarray(times, dtype=float)
    times = times[np.isfinite(times)]
    if times.size < MIN_SAMPLES:
        raise ValidationError(f"need at least {MIN_SAMPLES} event times, got {times.size}")
    if horizon is None:
        cdf = lambda x: 1.0 - np.exp(-rate * x)  # noqa: E731
    else:
        norm = 1.0 - math.exp(-rate * horizon)
        cdf = lambda x: (1.0 - np.exp(-rate * np.minimum(x, horizon))) / norm  # noqa: E731
    res = scipy.stats.kstest(times, cdf)
    report = EnsembleReport(n_traj=times.size)
    report.add("ks exponential p", res.pvalue, float(res.statistic), KS_ALPHA, 0.0, res.pvalue >= KS_ALPHA)
    return report


def pairwise_agreement(estimates: dict[str, tuple[float, float]], n_sigma: float = 3.0) -> EnsembleReport:
    """All pairs of ``(mean, stderr)`` estimates must agree within combined ``n_sigma``."""
    names = list(estimates)
    report = EnsembleReport(n_traj=0)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            (ma, sa), (mb, sb) = estimates[a], estimates[b]
            se = math.hypot(sa, sb)
            report.add(f"{a} - {b}", ma - mb, se, 0.0, max(n_sigma * se, 1e-12))
    return report


@dataclass
class SweepRow:
    tau: float
    value: float
    stderr: float
    reference: float

    @property
    def deviation(self) -> float:
        return abs(self.value - self.reference)


@dataclass
class SweepTable:
    rows: list[SweepRow]
    n_traj: int
    monotone: bool
    final_within: bool

    @property
    def passed(self) -> bool:
        return self.monotone and self.final_within

    def to_dict(self) -> dict:
        return {
            "n_traj": self.n_traj,
            "monotone": self.monotone,
            "final_within": self.final_within,
            "pass": self.passed,
            "rows": [
                {
                    "tau": r.tau,
                    "value": r.value,
                    "stderr": r.stderr,
                    "reference": r.reference,
                    "deviation": r.deviation,
                }
                for r in self.rows
            ],
        }

    def to_csv(self) -> str:
        lines = ["tau,value,stderr,reference,deviation"]
        for r in self.rows:
            lines.append(f"{r.tau!r},{r.value!r},{r.stderr!r},{r.reference!r},{r.deviation!r}")
        return "\n".join(lines) + "\n"


# deviations at or below this are treated as exact agreement
_EXACT = 1e-9


def weak_convergence_sweep(
    m: SystemModel,
    scheme: MeasurementScheme,
    taus,
    X,
    T: float,
    N: int,
    psi0,
    seed: int,
    n_sigma: float = 3.0,
) -> SweepTable:
    """Deviation of ``E<psi_T|X psi_T>`` from the master equation as ``tau`` shrinks.

    ``taus`` are processed from largest to smallest.  The table passes when
    each deviation is at most the previous one plus ``n_sigma`` combined
    standard errors and the smallest-``tau`` deviation is within
    ``n_sigma`` standard errors.
    """
    c = ito_coefficients(m)

    def run(tau):
        return run_discrete_ensemble(m, scheme, tau, T, psi0, N, seed)

    return _sweep(run, lindblad_generator(c), taus, X, T, N, psi0, n_sigma)


def sse_convergence_sweep(
    kind: str,
    H,
    L,
    dts,
    X,
    T: float,
    N: int,
    psi0,
    seed: int,
    f=None,
    n_sigma: float = 3.0,
) -> SweepTable:
    """Same protocol as :func:`weak_convergence_sweep` for an SSE integrator over step sizes ``dts``."""
    gen = LindbladGenerator(as_cmatrix(H, "H"), as_cmatrix(L, "L"))

    def run(dt):
        return run_sse_ensemble(kind, H, L, psi0, T, dt, N, seed, f=f)

    return _sweep(run, gen, dts, X, T, N, psi0, n_sigma)


def _sweep(run, gen, steps, X, T, N, psi0, n_sigma) -> SweepTable:
    if N < MIN_SAMPLES:
        raise ValidationError(f"convergence sweep needs at least {MIN_SAMPLES} trajectories, got {N}")
    psi0 = np.asarray(psi0, dtype=np.complex128)
    rho0 = np.outer(psi0, psi0.conj())
    ref = master_expectation(gen, rho0, X, T)
    rows = []
    for step in sorted(steps, reverse=True):
        ens = run(step)
        value, se = ensemble_expectation(ens, X, ens.sample_times[-1])
        rows.append(SweepRow(float(step), value, se, ref))
    monotone = all(
        b.deviation <= a.deviation + max(n_sigma * math.hypot(a.stderr, b.stderr), _EXACT)
        for a, b in zip(rows, rows[1:])
    )
    last = rows[-1]
    final_within = last.deviation <= max(n_sigma * last.stderr, _EXACT)
    return SweepTable(rows=rows, n_traj=N, monotone=monotone, final_within=final_within)
