"""Dense complex linear algebra for small Hilbert spaces.

Everything here works on plain ``numpy`` arrays of dtype ``complex128``.
Dimensions are tiny (system d <= ~16, joint spaces up to 2**10), so all
matrices are dense and all decompositions are full.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

HERMITIAN_TOL = 1e-10


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def as_cmatrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {m.shape}")
    return m


def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def hermiticity_residual(a: np.ndarray) -> float:
    """Frobenius norm of ``a - a^dagger``."""
    return float(np.linalg.norm(a - dag(a)))


def unitarity_residual_matrix(u: np.ndarray) -> float:
    """Frobenius norm of ``u^dagger u - I``."""
    return float(np.linalg.norm(dag(u) @ u - np.eye(u.shape[0])))


def _scaled_tol(a: np.ndarray, tol: float) -> float:
    # absolute tolerance for O(1) matrices, relative beyond that
    return tol * max(1.0, float(np.linalg.norm(a)))


def hermitian_matrix_function(a, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its eigenbasis.

    Parameters
    ----------
    a : array_like
        Hermitian matrix, ``||a - a^dagger||_F <= 1e-10``.
    f : callable
        Vectorised scalar function evaluated on the real eigenvalues.

    Returns
    -------
    numpy.ndarray
        ``U f(D) U^dagger`` where ``a = U D U^dagger``.
    """
    a = as_cmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got {a.shape}")
    if hermiticity_residual(a) > _scaled_tol(a, HERMITIAN_TOL):
        raise ValidationError(
            f"matrix is not Hermitian (residual {hermiticity_residual(a):.3e})"
        )
    w, u = np.linalg.eigh(0.5 * (a + dag(a)))
    fw = np.asarray(f(w), dtype=np.complex128)
    return (u * fw) @ dag(u)


def expm_skew(a) -> np.ndarray:
    """Exponential of a skew-Hermitian matrix; the result is unitary."""
    a = as_cmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got {a.shape}")
    resid = float(np.linalg.norm(a + dag(a)))
    if resid > _scaled_tol(a, HERMITIAN_TOL):
        raise ValidationError(f"matrix is not skew-Hermitian (residual {resid:.3e})")
    # a = -i h with h Hermitian
    return hermitian_matrix_function(1j * a, lambda x: np.exp(-1j * x))


def kron(*ops) -> np.ndarray:
    """Kronecker product of any number of operators, left factor outermost."""
    out = np.ones((1, 1), dtype=np.complex128)
    for op in ops:
        out = np.kron(out, np.asarray(op, dtype=np.complex128))
    return out


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma``."""
    rho = as_cmatrix(rho, "rho")
    sigma = as_cmatrix(sigma, "sigma")
    if rho.shape != sigma.shape:
        raise ValidationError(f"shape mismatch: {rho.shape} vs {sigma.shape}")
    diff = rho - sigma
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + dag(diff))))))


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * 0.5 * (g + dag(g))


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    return expm_skew(-1j * random_hermitian(d, rng))


def random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = g @ dag(g)
    return rho / np.trace(rho).real


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorisation, ``vec(AXB) = (B^T kron A) vec(X)``."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape((d, d), order="F")


def apply_rows(op: np.ndarray, psis: np.ndarray) -> np.ndarray:
    """``op @ psi`` for every row ``psi`` of ``psis``.

    Unlike a BLAS product, each row is reduced on its own, so a trajectory
    gets bit-identical results whatever the batch it runs in.
    """
    return (psis[:, None, :] * op[None, :, :]).sum(axis=-1)


def expect(op: np.ndarray, psi: np.ndarray) -> complex:
    return complex(np.vdot(psi, op @ psi))


# Qubit operators in the ordered basis (e0, e1), e0 the ground state.
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=np.complex128)  # |e1><e0|
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)  # |e0><e1|
SIGMA_X = SIGMA_PLUS + SIGMA_MINUS
# [sigma+, sigma-]: +1 on the excited state
SIGMA_Z = SIGMA_PLUS @ SIGMA_MINUS - SIGMA_MINUS @ SIGMA_PLUS
NUMBER = SIGMA_PLUS @ SIGMA_MINUS
I2 = np.eye(2, dtype=np.complex128)
