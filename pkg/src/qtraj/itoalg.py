"""Quantum Ito calculus with constant operator coefficients.

A :class:`QsdeDifferential` stands for ``sum_ab G_ab dA^ab`` over the four
fundamental increments ``dA^00 = dt``, ``dA^10 = dA+``, ``dA^01 = dA-`` and
``dA^11 = dLambda``.  Products follow the Ito table: the only non-vanishing
products are ``dA^a1 dA^1b = dA^ab``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import INDEX_PAIRS, ItoCoefficients
from .numerics import ValidationError, as_cmatrix, dag

INCREMENT_NAMES = {(0, 0): "dt", (1, 0): "dA+", (0, 1): "dA-", (1, 1): "dLambda"}


@dataclass(frozen=True)
class QsdeDifferential:
    coeff: dict

    def __post_init__(self):
        dims = set()
        full = {}
        for key in INDEX_PAIRS:
            if key not in self.coeff:
                raise ValidationError(f"missing coefficient for {key}")
            m = as_cmatrix(self.coeff[key])
            dims.add(m.shape)
            full[key] = m
        if len(dims) != 1:
            raise ValidationError(f"coefficient dimensions differ: {sorted(dims)}")
        object.__setattr__(self, "coeff", full)

    @property
    def dim(self) -> int:
        return self.coeff[(0, 0)].shape[0]

    def __getitem__(self, key) -> np.ndarray:
        return self.coeff[key]

    @classmethod
    def zero(cls, d: int) -> "QsdeDifferential":
        return cls({k: np.zeros((d, d), dtype=np.complex128) for k in INDEX_PAIRS})

    @classmethod
    def from_terms(cls, d: int, **terms) -> "QsdeDifferential":
        """Build from keyword terms ``dt``, ``dAp``, ``dAm``, ``dLambda``; scalars mean multiples of I."""
        names = {"dt": (0, 0), "dAp": (1, 0), "dAm": (0, 1), "dLambda": (1, 1)}
        coeff = {k: np.zeros((d, d), dtype=np.complex128) for k in INDEX_PAIRS}
        for name, value in terms.items():
            if name not in names:
                raise ValidationError(f"unknown increment {name!r}")
            value = np.asarray(value, dtype=np.complex128)
            coeff[names[name]] = value * np.eye(d) if value.ndim == 0 else value
        return cls(coeff)

    @classmethod
    def from_ito(cls, c: ItoCoefficients) -> "QsdeDifferential":
        """The unitary's differential ``dU = L_ab dA^ab`` (at ``U = 1``)."""
        return cls({k: c.block(*k) for k in INDEX_PAIRS})

    def adjoint(self) -> "QsdeDifferential":
        # dA^ab adjoint is dA^ba
        return QsdeDifferential({(a, b): dag(self.coeff[(b, a)]) for a, b in INDEX_PAIRS})

    def __add__(self, other: "QsdeDifferential") -> "QsdeDifferential":
        _same_dim(self, other)
        return QsdeDifferential({k: self.coeff[k] + other.coeff[k] for k in INDEX_PAIRS})

    def __sub__(self, other: "QsdeDifferential") -> "QsdeDifferential":
        _same_dim(self, other)
        return QsdeDifferential({k: self.coeff[k] - other.coeff[k] for k in INDEX_PAIRS})

    def lmul(self, X) -> "QsdeDifferential":
        """``X * dF``: system operator on the left of every coefficient."""
        X = as_cmatrix(X)
        return QsdeDifferential({k: X @ v for k, v in self.coeff.items()})

    def rmul(self, X) -> "QsdeDifferential":
        X = as_cmatrix(X)
        return QsdeDifferential({k: v @ X for k, v in self.coeff.items()})

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(v))) for v in self.coeff.values())

    def norm(self) -> float:
        return max(float(np.linalg.norm(v)) for v in self.coeff.values())

    def is_zero(self, tol: float = 1e-10) -> bool:
        return self.norm() <= tol

    def describe(self) -> dict[str, np.ndarray]:
        return {INCREMENT_NAMES[k]: v for k, v in self.coeff.items()}


def _same_dim(a: QsdeDifferential, b: QsdeDifferential) -> None:
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")


def ito_product(dF: QsdeDifferential, dG: QsdeDifferential) -> QsdeDifferential:
    """``dF dG`` under the Ito table: ``(dF dG)_ab = F_a1 G_1b``."""
    _same_dim(dF, dG)
    return QsdeDifferential({(a, b): dF[(a, 1)] @ dG[(1, b)] for a, b in INDEX_PAIRS})


def unitarity_defect(c: ItoCoefficients) -> QsdeDifferential:
    """``d(U^dag U)`` at ``U = 1``: ``dU^dag + dU + dU^dag dU``.

    Its coefficients are ``L_ba^dag + L_ab + L_1a^dag L_1b``.
    """
    dU = QsdeDifferential.from_ito(c)
    dUd = dU.adjoint()
    return dUd + dU + ito_product(dUd, dU)


def heisenberg_generator(c: ItoCoefficients, X) -> QsdeDifferential:
    """``d(U^dag X U)`` at ``U = 1``; coefficient ``ab`` is ``L_ba^dag X + X L_ab + L_1a^dag X L_1b``."""
    X = as_cmatrix(X, "X")
    if X.shape != (c.dim, c.dim):
        raise ValidationError(f"X must be {c.dim}x{c.dim}, got {X.shape}")
    dU = QsdeDifferential.from_ito(c)
    dUd = dU.adjoint()
    return dUd.rmul(X) + dU.lmul(X) + ito_product(dUd.rmul(X), dU)


def output_differential(Y: QsdeDifferential, c: ItoCoefficients) -> QsdeDifferential:
    """Inner coefficients of ``d(U^dag Y U)`` for a noise process ``Y`` acting trivially on the system.

    ``(a, b) -> Y_ab + L_1a^dag Y_1b + Y_a1 L_1b + L_1a^dag Y_11 L_1b``.  The
    outer conjugation by ``U`` is left implicit.
    """
    _same_dim(Y, QsdeDifferential.from_ito(c))
    dU = QsdeDifferential.from_ito(c)
    dUd = dU.adjoint()
    return Y + ito_product(dUd, Y) + ito_product(Y, dU) + ito_product(ito_product(dUd, Y), dU)


def quadrature_process(d: int) -> QsdeDifferential:
    """``dQ = dA+ + dA-``."""
    return QsdeDifferential.from_terms(d, dAp=1.0, dAm=1.0)


def gauge_process(d: int) -> QsdeDifferential:
    """``dLambda``."""
    return QsdeDifferential.from_terms(d, dLambda=1.0)


def displaced_gauge_process(d: int, f: float) -> QsdeDifferential:
    """``dLambda^f = dLambda + f dA+ + f dA- + f^2 dt``."""
    return QsdeDifferential.from_terms(d, dLambda=1.0, dAp=f, dAm=f, dt=f * f)


def self_adjoint_residual(dY: QsdeDifferential) -> float:
    return (dY - dY.adjoint()).norm()
