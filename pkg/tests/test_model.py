import json

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from qtraj.model import (
    ItoCoefficients,
    LindbladGenerator,
    SystemModel,
    canonical_qubit_model,
    decoupled_model,
    ito_coefficients,
    ito_coefficients_series,
    lindblad_generator,
    phi1,
    phi2,
    phi3,
    random_model,
    structural_residuals,
    unitarity_residual,
    validate_model,
)
from qtraj.numerics import (
    NUMBER,
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_Z,
    ValidationError,
    random_density,
    random_hermitian,
    vec,
    unvec,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
zero2 = np.zeros((2, 2))


# validation


def test_all_zero_model_is_valid_but_flagged():
    report = validate_model(decoupled_model(zero2))
    assert report.valid
    assert report.flags


def test_broken_coupling_symmetry_reported():
    m = SystemModel(H00=zero2, H01=SIGMA_PLUS, H10=SIGMA_PLUS, H11=np.eye(2))
    report = validate_model(m)
    assert not report.valid
    assert report.coupling_residual == pytest.approx(np.sqrt(2.0))
    with pytest.raises(ValidationError):
        ito_coefficients(m)


def test_canonical_model_valid_without_flags(canonical):
    report = validate_model(canonical)
    assert report.valid and not report.flags
    assert report.min_abs_eig_H11 == pytest.approx(0.5)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValidationError):
        SystemModel(H00=np.zeros((2, 2)), H01=np.zeros((3, 3)), H10=np.zeros((2, 2)), H11=np.zeros((2, 2)))


def test_model_json_round_trip(rng):
    m = random_model(3, rng)
    back = SystemModel.from_json(m.to_json())
    for name in ("H00", "H01", "H10", "H11"):
        assert np.array_equal(getattr(m, name), getattr(back, name))
    data = json.loads(m.to_json())
    assert data["dim"] == 3 and len(data["H00"]) == 3 and len(data["H00"][0][0]) == 2


def test_model_json_accepts_flat_lists():
    flat = [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [-1.0, 0.0]]
    zero = [[0.0, 0.0]] * 4
    m = SystemModel.from_dict({"dim": 2, "H00": flat, "H01": zero, "H10": zero, "H11": zero})
    assert np.array_equal(m.H00, np.diag([1.0, -1.0]))


# phi functions


@pytest.mark.parametrize("x", [0.0, 1e-5, 9.99e-4, 1.01e-3, 0.3, 2.0, -1.7])
def test_phi_functions_match_closed_forms(x):
    xs = x if x != 0 else 1e-300
    with np.errstate(all="ignore"):
        e1 = (np.exp(-1j * xs) - 1) / xs if abs(x) > 1e-8 else -1j
        e2 = (np.exp(-1j * xs) - 1 + 1j * xs) / xs**2 if abs(x) > 1e-4 else -0.5 + 1j * x / 6
        e3 = (xs - np.sin(xs)) / xs**2 if abs(x) > 1e-4 else x / 6
    assert abs(phi1(x) - e1) <= 1e-12
    assert abs(phi2(x) - e2) <= 1e-9
    assert abs(phi3(x) - e3) <= 1e-9


def test_phi_functions_continuous_across_cutoff():
    lo, hi = np.nextafter(1e-3, 0), 1e-3
    for f in (phi1, phi2, phi3):
        assert abs(f(lo) - f(hi)) <= 1e-12


# Ito coefficients


def test_decoupled_coefficients(rng):
    h00 = random_hermitian(3, rng)
    h11 = random_hermitian(3, rng)
    z = np.zeros((3, 3))
    c = ito_coefficients(SystemModel(H00=h00, H01=z, H10=z, H11=h11))
    assert np.allclose(c.L10, 0) and np.allclose(c.L01, 0)
    assert np.allclose(c.L00, -1j * h00)
    assert np.allclose(c.L11, scipy.linalg.expm(-1j * h11) - np.eye(3), atol=1e-12)


def test_canonical_coupling_operator(canonical):
    c = ito_coefficients(canonical)
    expected = (np.exp(-0.5j) - 1) / 0.5 * SIGMA_MINUS
    assert np.max(np.abs(c.L - expected)) <= 1e-14


def test_random_model_matches_series(rng):
    m = random_model(4, rng)
    a, b = ito_coefficients(m), ito_coefficients_series(m, 40)
    for i in (0, 1):
        for j in (0, 1):
            assert np.max(np.abs(a.block(i, j) - b.block(i, j))) <= 1e-10


def test_series_two_terms_hand_value(rng):
    m = random_model(2, rng)
    m = SystemModel(H00=m.H00, H01=m.H01, H10=m.H10, H11=np.zeros((2, 2)))
    c = ito_coefficients_series(m, 2)
    for a in (0, 1):
        for b in (0, 1):
            expected = -1j * m.block(a, b) - 0.5 * m.block(a, 1) @ m.block(1, b)
            assert np.allclose(c.block(a, b), expected, atol=1e-15)


def test_series_canonical_matches_closed_form_tightly(canonical):
    a, b = ito_coefficients(canonical), ito_coefficients_series(canonical, 40)
    assert max(np.max(np.abs(a.block(i, j) - b.block(i, j))) for i in (0, 1) for j in (0, 1)) <= 1e-12


def test_series_of_zero_model_is_zero():
    c = ito_coefficients_series(decoupled_model(zero2), 40)
    assert all(np.array_equal(c.block(i, j), zero2) for i in (0, 1) for j in (0, 1))


def test_small_kappa_uses_analytic_limits():
    m = canonical_qubit_model(kappa=1e-9)
    c = ito_coefficients(m)
    assert np.max(np.abs(c.L - (-1j * m.H10))) <= 1e-6
    assert np.max(np.abs(c.H - m.H00)) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4), st.floats(0.01, 2.0))
def test_structural_and_unitarity_invariants(seed, d, norm):
    c = ito_coefficients(random_model(d, np.random.default_rng(seed), h11_norm=norm))
    assert unitarity_residual(c) <= 1e-10
    assert max(structural_residuals(c).values()) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4))
def test_closed_form_matches_series(seed, d):
    m = random_model(d, np.random.default_rng(seed), h11_norm=2.0)
    a, b = ito_coefficients(m), ito_coefficients_series(m, 40)
    gap = max(np.linalg.norm(a.block(i, j) - b.block(i, j)) for i in (0, 1) for j in (0, 1))
    assert gap <= 1e-9


# unitarity residual


def test_unitarity_residual_examples(canonical):
    c = ito_coefficients(canonical)
    assert unitarity_residual(c) <= 1e-10
    bumped = ItoCoefficients(c.L00 + 0.1 * np.eye(2), c.L01, c.L10, c.L11, c.W, c.H, c.L)
    assert unitarity_residual(bumped) >= 0.2
    z = np.zeros((2, 2))
    assert unitarity_residual(ItoCoefficients(z, z, z, z, np.eye(2), z, z)) == 0.0


# Lindblad generator


def test_generator_annihilates_identity(rng):
    gen = lindblad_generator(ito_coefficients(random_model(3, rng)))
    assert np.max(np.abs(gen.heisenberg(np.eye(3)))) <= 1e-10


def test_generator_without_coupling_is_commutator(rng):
    h = random_hermitian(3, rng)
    x = rng.standard_normal((3, 3))
    gen = LindbladGenerator(h, np.zeros((3, 3)))
    assert np.allclose(gen.heisenberg(x), -1j * (x @ h - h @ x))


def test_decay_generator_on_number_operator():
    gen = LindbladGenerator(np.zeros((2, 2)), SIGMA_MINUS)
    assert np.allclose(gen.heisenberg(NUMBER), -NUMBER, atol=1e-15)


def test_generator_rejects_non_unitary_coefficients(canonical):
    c = ito_coefficients(canonical)
    bad = ItoCoefficients(c.L00 + 0.1, c.L01, c.L10, c.L11, c.W, c.H, c.L)
    with pytest.raises(ValidationError):
        lindblad_generator(bad)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4))
def test_generator_duality_and_trace(seed, d):
    rng = np.random.default_rng(seed)
    gen = lindblad_generator(ito_coefficients(random_model(d, rng)))
    x = random_hermitian(d, rng) + 1j * random_hermitian(d, rng)
    rho = random_density(d, rng)
    lhs = np.trace(x @ gen.schrodinger(rho))
    rhs = np.trace(gen.heisenberg(x) @ rho)
    assert abs(lhs - rhs) <= 1e-10
    assert abs(np.trace(gen.schrodinger(rho))) <= 1e-10
    assert np.allclose(gen.apply_vec(rho), gen.schrodinger(rho), atol=1e-12)
    assert np.allclose(unvec(gen.heisenberg_matrix_rep @ vec(x), d), gen.heisenberg(x), atol=1e-12)


def test_semigroup_property(rng):
    gen = lindblad_generator(ito_coefficients(random_model(3, rng)))
    prop = lambda t: scipy.linalg.expm(t * gen.matrix_rep)  # noqa: E731
    for t in (0.1, 0.7):
        for s in (0.1, 0.7):
            assert np.max(np.abs(prop(t + s) - prop(t) @ prop(s))) <= 1e-9


def test_sigma_z_is_plus_one_on_excited_state():
    assert np.array_equal(SIGMA_Z, np.diag([-1.0, 1.0]))
