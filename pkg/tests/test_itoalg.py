import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtraj.itoalg import (
    QsdeDifferential,
    displaced_gauge_process,
    gauge_process,
    heisenberg_generator,
    ito_product,
    output_differential,
    quadrature_process,
    self_adjoint_residual,
    unitarity_defect,
)
from qtraj.model import INDEX_PAIRS, ItoCoefficients, canonical_qubit_model, ito_coefficients, lindblad_generator, random_model
from qtraj.numerics import SIGMA_MINUS, SIGMA_Z, ValidationError, dag, random_hermitian

seeds = st.integers(min_value=0, max_value=2**32 - 1)
I = np.eye(2)


def random_differential(d, rng):
    return QsdeDifferential(
        {k: rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)) for k in INDEX_PAIRS}
    )


def only(d, **terms):
    return QsdeDifferential.from_terms(d, **terms)


def assert_coeffs(dX, expected, tol=0.0):
    for name, key in (("dt", (0, 0)), ("dAp", (1, 0)), ("dAm", (0, 1)), ("dLambda", (1, 1))):
        want = expected.get(name, 0.0)
        assert np.max(np.abs(dX[key] - want)) <= tol, name


# Ito table


def test_annihilation_times_creation_is_dt():
    assert_coeffs(ito_product(only(2, dAm=1.0), only(2, dAp=1.0)), {"dt": I})


def test_creation_times_annihilation_vanishes():
    assert ito_product(only(2, dAp=1.0), only(2, dAm=1.0)).norm() == 0.0


def test_gauge_squared_is_gauge(rng):
    a, b = random_hermitian(2, rng), random_hermitian(2, rng)
    assert_coeffs(ito_product(only(2, dLambda=a), only(2, dLambda=b)), {"dLambda": a @ b})


def test_full_table():
    names = ("dt", "dAp", "dAm", "dLambda")
    table = {
        ("dAm", "dAp"): "dt",
        ("dAm", "dLambda"): "dAm",
        ("dLambda", "dAp"): "dAp",
        ("dLambda", "dLambda"): "dLambda",
    }
    for a in names:
        for b in names:
            prod = ito_product(only(1, **{a: 1.0}), only(1, **{b: 1.0}))
            want = table.get((a, b))
            assert_coeffs(prod, {want: 1.0} if want else {})


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        ito_product(QsdeDifferential.zero(2), QsdeDifferential.zero(3))
    with pytest.raises(ValidationError):
        QsdeDifferential({(0, 0): I, (0, 1): I, (1, 0): I, (1, 1): np.eye(3)})
    with pytest.raises(ValidationError):
        only(2, dB=1.0)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4))
def test_product_associative(seed, d):
    rng = np.random.default_rng(seed)
    f, g, h = (random_differential(d, rng) for _ in range(3))
    lhs = ito_product(ito_product(f, g), h)
    rhs = ito_product(f, ito_product(g, h))
    assert (lhs - rhs).max_abs() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4))
def test_adjoint_anti_homomorphism_and_involution(seed, d):
    rng = np.random.default_rng(seed)
    f, g = random_differential(d, rng), random_differential(d, rng)
    lhs = ito_product(f, g).adjoint()
    rhs = ito_product(g.adjoint(), f.adjoint())
    assert (lhs - rhs).max_abs() <= 1e-12
    back = f.adjoint().adjoint()
    assert all(np.array_equal(back[k], f[k]) for k in INDEX_PAIRS)


def test_adjoint_swaps_creation_and_annihilation(rng):
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    assert_coeffs(only(2, dAp=a).adjoint(), {"dAm": dag(a)})


# unitarity defect


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4))
def test_unitarity_defect_vanishes(seed, d):
    c = ito_coefficients(random_model(d, np.random.default_rng(seed)))
    assert unitarity_defect(c).norm() <= 1e-10


def test_unitarity_defect_zero_coefficients():
    z = np.zeros((2, 2))
    assert unitarity_defect(ItoCoefficients(z, z, z, z, I, z, z)).norm() == 0.0


def test_unitarity_defect_flags_lone_coupling():
    z = np.zeros((2, 2))
    defect = unitarity_defect(ItoCoefficients(z, z, I, z, I, z, I))
    assert_coeffs(defect, {"dt": I, "dAp": I, "dAm": I})
    assert not defect.is_zero()


# Heisenberg generator


def test_heisenberg_generator_kills_identity(rng):
    c = ito_coefficients(random_model(3, rng))
    assert heisenberg_generator(c, np.eye(3)).norm() <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4))
def test_heisenberg_dt_coefficient_matches_lindblad(seed, d):
    rng = np.random.default_rng(seed)
    c = ito_coefficients(random_model(d, rng))
    x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    ref = lindblad_generator(c).heisenberg(x)
    assert np.max(np.abs(heisenberg_generator(c, x)[(0, 0)] - ref)) <= 1e-12 * max(1.0, np.abs(ref).max())


def test_heisenberg_decay_sigma_z_two_ways():
    z = np.zeros((2, 2))
    c = ItoCoefficients.from_hamiltonian(z, SIGMA_MINUS)
    L, Ld, X = SIGMA_MINUS, dag(SIGMA_MINUS), SIGMA_Z
    two = 0.5 * (Ld @ X - X @ Ld) @ L + 0.5 * Ld @ (X @ L - L @ X)
    assert np.allclose(heisenberg_generator(c, X)[(0, 0)], two, atol=1e-15)
    # sigma_z relaxes towards the ground state: L(sz) = -(sz + 1)
    assert np.allclose(two, -(SIGMA_Z + I))


def test_heisenberg_dimension_check(canonical):
    with pytest.raises(ValidationError):
        heisenberg_generator(ito_coefficients(canonical), np.eye(3))


# output differentials


def test_quadrature_output(canonical):
    c = ito_coefficients(canonical)
    dq = output_differential(quadrature_process(2), c)
    assert_coeffs(dq, {"dAp": dag(c.W), "dAm": c.W, "dt": dag(c.L) + c.L}, tol=1e-12)


def test_gauge_output(canonical):
    c = ito_coefficients(canonical)
    dl = output_differential(gauge_process(2), c)
    expected = {"dLambda": I, "dAp": dag(c.W) @ c.L, "dAm": dag(c.L) @ c.W, "dt": dag(c.L) @ c.L}
    assert_coeffs(dl, expected, tol=1e-12)


def test_zero_process_output(canonical):
    assert output_differential(QsdeDifferential.zero(2), ito_coefficients(canonical)).norm() == 0.0


@pytest.mark.parametrize("f", [1e-3, 0.5, 2.0])
def test_displaced_gauge_intensity(canonical, f):
    c = ito_coefficients(canonical)
    out = output_differential(displaced_gauge_process(2, f), c)
    shifted = c.L + f * I
    assert np.max(np.abs(out[(0, 0)] - dag(shifted) @ shifted)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4))
def test_output_preserves_self_adjointness(seed, d):
    rng = np.random.default_rng(seed)
    c = ito_coefficients(random_model(d, rng))
    y = random_differential(d, rng)
    y = QsdeDifferential({k: 0.5 * (y[k] + y.adjoint()[k]) for k in INDEX_PAIRS})
    assert self_adjoint_residual(y) <= 1e-14
    for proc in (y, quadrature_process(d), gauge_process(d)):
        assert self_adjoint_residual(output_differential(proc, c)) <= 1e-10


def test_describe_names(canonical):
    desc = quadrature_process(2).describe()
    assert set(desc) == {"dt", "dA+", "dA-", "dLambda"}
    assert np.array_equal(desc["dA+"], I)
