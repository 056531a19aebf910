import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synfem.physics import (FluxParams, StressParams, flux, stress, stress_jacobian, stress_r,
                            to_voigt, verify_structural, VOIGT_IDENTITY)
from synfem.varexp import ScalarExponentLaw


def const_law(r):
    return ScalarExponentLaw("rational", r, 0.0)


def sym(a, b, c):
    return np.array([[a, c], [c, b]])


def test_stress_zero():
    np.testing.assert_array_equal(stress(0.3, np.zeros((2, 2)), StressParams()), 0)


def test_newtonian():
    p = StressParams(nu0=2.5, law=const_law(2.0))
    D = sym(1.0, -0.3, 0.7)
    np.testing.assert_allclose(stress(0.5, D, p), 2.5 * D)


def test_stress_closed_form():
    p = StressParams(law=const_law(1.5))
    D = sym(1.0, -1.0, 0.0)
    np.testing.assert_allclose(stress(0.0, D, p), 3 ** -0.25 * D, rtol=1e-14)
    assert 3 ** -0.25 == pytest.approx(0.759836, abs=1e-6)


def test_flux():
    assert np.all(flux(0.0, np.zeros(2), sym(1, 2, 3), FluxParams(1.0, 0.5)) == 0)
    g = np.array([0.3, -2.0])
    np.testing.assert_allclose(flux(0.0, g, sym(4, 1, 2), FluxParams(1.7, 0.0)), 1.7 * g)
    # K = k0 + k1 / (1 + |D|)
    D = sym(3.0, 0.0, 0.0)
    np.testing.assert_allclose(flux(0.0, g, D, FluxParams(1.0, 2.0)), (1 + 2 / 4) * g)


def test_jacobian_at_origin():
    p = StressParams(nu0=1.3, kappa1=2.0, law=const_law(1.7))
    np.testing.assert_allclose(stress_jacobian(0.0, np.zeros((2, 2)), p), 1.3 * 2.0 ** (-0.15) * VOIGT_IDENTITY)


def test_jacobian_newtonian_constant():
    p = StressParams(nu0=0.8, law=const_law(2.0))
    np.testing.assert_allclose(stress_jacobian(0.0, sym(3, 1, -2), p), 0.8 * VOIGT_IDENTITY)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.2, 3.0), st.integers(0, 2**31 - 1))
def test_jacobian_matches_finite_differences(r, seed):
    rng = np.random.default_rng(seed)
    p = StressParams(kappa2=0.7)
    D = sym(*rng.standard_normal(3))
    dD = sym(*rng.standard_normal(3))
    eps = 1e-6
    fd = (stress_r(r, D + eps * dD, p) - stress_r(r, D - eps * dD, p)) / (2 * eps)
    # engineering-strain convention: the off-diagonal Voigt entry counts twice
    e = to_voigt(dD) * np.array([1.0, 1.0, 2.0])
    J = stress_jacobian_r(r, D, p)
    np.testing.assert_allclose(to_voigt(fd), J @ e, rtol=1e-6, atol=1e-8)


from synfem.physics import stress_jacobian_r  # noqa: E402


def test_verify_structural_default():
    rep = verify_structural(StressParams(), samples=10_000, flux_params=FluxParams(1.0, 0.5), seed=0)
    assert rep.ok and rep.violations == []


def test_kappa2_zero_rejected():
    with pytest.raises(ValueError):
        StressParams(kappa2=0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.2, 3.0), st.integers(0, 2**31 - 1))
def test_monotone_pairs(r, seed):
    rng = np.random.default_rng(seed)
    p = StressParams()
    A, B = sym(*rng.standard_normal(3)), sym(*rng.standard_normal(3))
    assert np.sum((stress_r(r, A, p) - stress_r(r, B, p)) * (A - B)) >= -1e-12
