"""Interaction model, Ito coefficients and the Lindblad generator.

A :class:`SystemModel` holds the four Hamiltonian blocks ``H_ab`` that
couple the system to one apparatus qubit per collision.  From them we get
the Ito coefficients ``L_ab`` of the limiting quantum stochastic
differential equation, in closed form and as a truncated power series
(the latter serves as an independent check of the former).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_Z,
    ValidationError,
    as_cmatrix,
    dag,
    hermitian_matrix_function,
    hermiticity_residual,
    unvec,
    vec,
)

BLOCKS = ("H00", "H01", "H10", "H11")
INDEX_PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))

VALIDITY_TOL = 1e-10
SMALL_EIGENVALUE = 1e-6
TAYLOR_CUTOFF = 1e-3
_TAYLOR_TERMS = 12


@dataclass(frozen=True)
class SystemModel:
    """Hamiltonian blocks of one collision, system factor first.

    The collision Hamiltonian is
    ``H11 (x) s+s- / tau + H10 (x) s+ / sqrt(tau) + H01 (x) s- / sqrt(tau) + H00``.
    """

    H00: np.ndarray
    H01: np.ndarray
    H10: np.ndarray
    H11: np.ndarray

    def __post_init__(self):
        shapes = set()
        for name in BLOCKS:
            m = as_cmatrix(getattr(self, name), name)
            m.setflags(write=False)
            object.__setattr__(self, name, m)
            shapes.add(m.shape)
        if len(shapes) != 1:
            raise ValidationError(f"dimension mismatch among blocks: {sorted(shapes)}")
        (shape,) = shapes
        if shape[0] != shape[1]:
            raise ValidationError(f"blocks must be square, got {shape}")

    @property
    def dim(self) -> int:
        return self.H00.shape[0]

    def block(self, a: int, b: int) -> np.ndarray:
        return getattr(self, f"H{a}{b}")

    def to_dict(self) -> dict:
        out: dict = {"dim": self.dim}
        for name in BLOCKS:
            out[name] = matrix_to_json(getattr(self, name))
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SystemModel":
        try:
            dim = int(data["dim"])
            blocks = {name: matrix_from_json(data[name], dim) for name in BLOCKS}
        except KeyError as exc:
            raise ValidationError(f"model is missing field {exc}") from None
        return cls(**blocks)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SystemModel":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "SystemModel":
        return cls.from_json(Path(path).read_text())


def matrix_to_json(m: np.ndarray) -> list:
    """Row-major nested list of ``[re, im]`` pairs."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def matrix_from_json(data, dim: int | None = None) -> np.ndarray:
    """Inverse of :func:`matrix_to_json`; also accepts a flat row-major list."""
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise ValidationError("matrix entries must be [re, im] pairs")
    z = arr[..., 0] + 1j * arr[..., 1]
    if z.ndim == 1:
        n = dim if dim is not None else math.isqrt(z.size)
        if n * n != z.size:
            raise ValidationError(f"flat matrix of {z.size} entries is not {n}x{n}")
        z = z.reshape(n, n)
    if dim is not None and z.shape != (dim, dim):
        raise ValidationError(f"expected a {dim}x{dim} matrix, got {z.shape}")
    return z


def canonical_qubit_model(kappa: float = 0.5) -> SystemModel:
    """Qubit with ``H00 = sz/2``, ``H10 = s-``, ``H01 = s+`` and ``H11 = kappa*I``."""
    return SystemModel(
        H00=0.5 * SIGMA_Z,
        H01=SIGMA_PLUS,
        H10=SIGMA_MINUS,
        H11=kappa * np.eye(2),
    )


def decoupled_model(H00) -> SystemModel:
    H00 = as_cmatrix(H00, "H00")
    z = np.zeros_like(H00)
    return SystemModel(H00=H00, H01=z, H10=z, H11=z)


def random_model(d: int, rng: np.random.Generator, h11_norm: float = 2.0) -> SystemModel:
    """Random valid model whose ``H11`` has spectral norm ``h11_norm``."""

    def herm():
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        return 0.5 * (g + dag(g))

    h11 = herm()
    h11 *= h11_norm / np.linalg.norm(h11, 2)
    h10 = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return SystemModel(H00=herm(), H01=dag(h10), H10=h10, H11=h11)


@dataclass
class ValidationReport:
    herm_H00: float
    herm_H11: float
    coupling_residual: float
    min_abs_eig_H11: float
    flags: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return max(self.herm_H00, self.herm_H11, self.coupling_residual) <= VALIDITY_TOL

    def errors(self) -> list[str]:
        out = []
        if self.herm_H00 > VALIDITY_TOL:
            out.append(f"H00 is not Hermitian (residual {self.herm_H00:.3e})")
        if self.herm_H11 > VALIDITY_TOL:
            out.append(f"H11 is not Hermitian (residual {self.herm_H11:.3e})")
        if self.coupling_residual > VALIDITY_TOL:
            out.append(f"H01 != H10^dagger (residual {self.coupling_residual:.3e})")
        return out


def validate_model(m: SystemModel) -> ValidationReport:
    """Check Hermiticity and coupling symmetry; flag near-zero ``H11`` eigenvalues.

    Small ``H11`` eigenvalues are only flagged: the coefficient formulas
    have finite analytic limits there.
    """
    herm11 = hermiticity_residual(m.H11)
    eig = np.linalg.eigvalsh(0.5 * (m.H11 + dag(m.H11)))
    report = ValidationReport(
        herm_H00=hermiticity_residual(m.H00),
        herm_H11=herm11,
        coupling_residual=float(np.linalg.norm(m.H01 - dag(m.H10))),
        min_abs_eig_H11=float(np.min(np.abs(eig))),
    )
    if report.min_abs_eig_H11 < SMALL_EIGENVALUE:
        report.flags.append(
            f"H11 has an eigenvalue of magnitude {report.min_abs_eig_H11:.3e} "
            f"< {SMALL_EIGENVALUE:g}; using analytic limits"
        )
    return report


def require_valid(m: SystemModel) -> ValidationReport:
    report = validate_model(m)
    if not report.valid:
        raise ValidationError("invalid model: " + "; ".join(report.errors()))
    return report


def _taylor(x: np.ndarray, coeff) -> np.ndarray:
    out = np.zeros_like(x, dtype=np.complex128)
    for k in reversed(range(_TAYLOR_TERMS)):
        out = out * x + coeff(k)
    return out


def phi1(x) -> np.ndarray:
    """``(exp(-ix) - 1) / x``, equal to ``-i`` at the origin."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < TAYLOR_CUTOFF
    safe = np.where(small, 1.0, x)
    # sum_{n>=1} (-i)^n x^(n-1) / n!
    series = _taylor(x, lambda k: (-1j) ** (k + 1) / math.factorial(k + 1))
    return np.where(small, series, (np.exp(-1j * safe) - 1.0) / safe)


def phi2(x) -> np.ndarray:
    """``(exp(-ix) - 1 + ix) / x^2``, equal to ``-1/2`` at the origin."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < TAYLOR_CUTOFF
    safe = np.where(small, 1.0, x)
    series = _taylor(x, lambda k: (-1j) ** (k + 2) / math.factorial(k + 2))
    # half-angle form avoids the cancellation in exp(-ix) - 1 + ix
    closed = (-2.0 * np.sin(0.5 * safe) ** 2 + 1j * (safe - np.sin(safe))) / safe**2
    return np.where(small, series, closed)


def phi3(x) -> np.ndarray:
    """``(x - sin x) / x^2``, vanishing at the origin."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < TAYLOR_CUTOFF
    safe = np.where(small, 1.0, x)
    # sum_{k>=1} (-1)^(k+1) x^(2k-1) / (2k+1)!, odd powers only
    def coeff(n):
        if n % 2 == 0:
            return 0.0
        k = (n + 1) // 2
        return (-1) ** (k + 1) / math.factorial(2 * k + 1)

    series = _taylor(x, coeff).real
    return np.where(small, series, (safe - np.sin(safe)) / safe**2)


@dataclass(frozen=True)
class ItoCoefficients:
    """Ito coefficients ``L_ab`` together with the derived ``(W, H, L)``."""

    L00: np.ndarray
    L01: np.ndarray
    L10: np.ndarray
    L11: np.ndarray
    W: np.ndarray
    H: np.ndarray
    L: np.ndarray

    @property
    def dim(self) -> int:
        return self.L00.shape[0]

    def block(self, a: int, b: int) -> np.ndarray:
        return getattr(self, f"L{a}{b}")

    @classmethod
    def from_blocks(cls, L00, L01, L10, L11) -> "ItoCoefficients":
        """Build from the four blocks, reading off ``W``, ``H`` and ``L``."""
        L00, L01, L10, L11 = (as_cmatrix(x) for x in (L00, L01, L10, L11))
        d = L00.shape[0]
        H = 1j * (L00 + 0.5 * dag(L10) @ L10)
        return cls(L00=L00, L01=L01, L10=L10, L11=L11, W=np.eye(d) + L11, H=H, L=L10)

    @classmethod
    def from_hamiltonian(cls, H, L, W=None) -> "ItoCoefficients":
        """Unitary-form coefficients from a Hamiltonian, coupling and scattering."""
        H = as_cmatrix(H, "H")
        L = as_cmatrix(L, "L")
        W = np.eye(H.shape[0], dtype=np.complex128) if W is None else as_cmatrix(W, "W")
        return cls(
            L00=-1j * H - 0.5 * dag(L) @ L,
            L01=-dag(L) @ W,
            L10=L,
            L11=W - np.eye(H.shape[0]),
            W=W,
            H=H,
            L=L,
        )


def ito_coefficients(m: SystemModel) -> ItoCoefficients:
    """Closed-form Ito coefficients of a valid model.

    ``L11 = exp(-i H11) - 1``, ``L10 = phi1(H11) H10``, ``L01 = H01 phi1(H11)``,
    ``L00 = -i H00 + H01 phi2(H11) H10``, with ``W = exp(-i H11)``,
    ``H = H00 - H01 phi3(H11) H10`` and ``L = L10``.
    """
    require_valid(m)
    h11 = 0.5 * (m.H11 + dag(m.H11))
    W = hermitian_matrix_function(h11, lambda x: np.exp(-1j * x))
    f1 = hermitian_matrix_function(h11, phi1)
    f2 = hermitian_matrix_function(h11, phi2)
    f3 = hermitian_matrix_function(h11, phi3)
    d = m.dim
    L10 = f1 @ m.H10
    H = m.H00 - m.H01 @ f3 @ m.H10
    return ItoCoefficients(
        L00=-1j * m.H00 + m.H01 @ f2 @ m.H10,
        L01=m.H01 @ f1,
        L10=L10,
        L11=W - np.eye(d),
        W=W,
        H=0.5 * (H + dag(H)),
        L=L10,
    )


def ito_coefficients_series(m: SystemModel, n_terms: int = 40) -> ItoCoefficients:
    """Ito coefficients from the power series truncated after order ``n_terms``.

    ``L_ab = -i H_ab + sum_{n=2}^{n_terms} (-i)^n / n! H_a1 H11^(n-2) H_1b``.
    """
    if n_terms < 2:
        raise ValidationError("n_terms must be >= 2")
    require_valid(m)
    d = m.dim
    blocks = {}
    for a, b in INDEX_PAIRS:
        total = -1j * m.block(a, b)
        power = np.eye(d, dtype=np.complex128)  # H11^(n-2)
        for n in range(2, n_terms + 1):
            total = total + ((-1j) ** n / math.factorial(n)) * (m.block(a, 1) @ power @ m.block(1, b))
            power = power @ m.H11
        blocks[f"L{a}{b}"] = total
    return ItoCoefficients.from_blocks(**blocks)


def unitarity_relation(c: ItoCoefficients, a: int, b: int) -> np.ndarray:
    """``L_ab + L_ba^dagger + L_1a^dagger L_1b``, zero for unitary dynamics."""
    return c.block(a, b) + dag(c.block(b, a)) + dag(c.block(1, a)) @ c.block(1, b)


def unitarity_residual(c: ItoCoefficients) -> float:
    return max(float(np.linalg.norm(unitarity_relation(c, a, b))) for a, b in INDEX_PAIRS)


def structural_residuals(c: ItoCoefficients) -> dict[str, float]:
    """Deviation of ``c`` from the ``(W, H, L)`` parametrisation."""
    d = c.dim
    eye = np.eye(d)
    return {
        "L11": float(np.linalg.norm(c.L11 - (c.W - eye))),
        "L10": float(np.linalg.norm(c.L10 - c.L)),
        "L01": float(np.linalg.norm(c.L01 + dag(c.L) @ c.W)),
        "L00": float(np.linalg.norm(c.L00 + 1j * c.H + 0.5 * dag(c.L) @ c.L)),
        "W_unitary": float(np.linalg.norm(dag(c.W) @ c.W - eye)),
        "H_hermitian": hermiticity_residual(c.H),
    }


@dataclass(frozen=True)
class LindbladGenerator:
    """Lindblad generator with Hamiltonian ``H`` and a single coupling ``L``."""

    H: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "H", as_cmatrix(self.H, "H"))
        object.__setattr__(self, "L", as_cmatrix(self.L, "L"))

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def heisenberg(self, X) -> np.ndarray:
        """``1/2 [L^dag, X] L + 1/2 L^dag [X, L] - i [X, H]``."""
        X = as_cmatrix(X, "X")
        H, L = self.H, self.L
        Ld = dag(L)
        return 0.5 * (Ld @ X - X @ Ld) @ L + 0.5 * Ld @ (X @ L - L @ X) - 1j * (X @ H - H @ X)

    def schrodinger(self, rho) -> np.ndarray:
        """Trace dual: ``-i[H, rho] + L rho L^dag - 1/2 {L^dag L, rho}``."""
        rho = as_cmatrix(rho, "rho")
        H, L = self.H, self.L
        LdL = dag(L) @ L
        return -1j * (H @ rho - rho @ H) + L @ rho @ dag(L) - 0.5 * (LdL @ rho + rho @ LdL)

    @property
    def matrix_rep(self) -> np.ndarray:
        """Schrodinger-picture superoperator acting on column-stacked ``vec(rho)``."""
        d = self.dim
        eye = np.eye(d)
        H, L = self.H, self.L
        LdL = dag(L) @ L
        return (
            -1j * (np.kron(eye, H) - np.kron(H.T, eye))
            + np.kron(L.conj(), L)
            - 0.5 * (np.kron(eye, LdL) + np.kron(LdL.T, eye))
        )

    @property
    def heisenberg_matrix_rep(self) -> np.ndarray:
        d = self.dim
        eye = np.eye(d)
        H, L = self.H, self.L
        Ld = dag(L)
        LdL = Ld @ L
        return (
            np.kron(L.T, Ld)
            - 0.5 * (np.kron(eye, LdL) + np.kron(LdL.T, eye))
            + 1j * (np.kron(eye, H) - np.kron(H.T, eye))
        )

    def apply_vec(self, rho) -> np.ndarray:
        return unvec(self.matrix_rep @ vec(rho), self.dim)


def lindblad_generator(c: ItoCoefficients, tol: float = 1e-8) -> LindbladGenerator:
    resid = unitarity_residual(c)
    if resid > tol:
        raise ValidationError(f"coefficients violate the unitarity relations (residual {resid:.3e})")
    return LindbladGenerator(H=c.H, L=c.L)
