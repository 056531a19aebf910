import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synfem.mesh import unit_square
from synfem.quadrature import triangle_rule
from synfem.varexp import (ExponentError, ExponentField, ScalarExponentLaw, conjugate,
                           key_estimate_witness, local_exponent, log_holder_estimate,
                           luxemburg_norm, modular, sample)

MESH = unit_square(4)


def const(v):
    return lambda X: np.full(len(X), float(v))


def r_affine(X):
    return 1.5 + 0.5 * X[:, 0]


R_AFF = ExponentField.from_function(r_affine, 1.5, 2.0)


@pytest.mark.parametrize("f, r, expected", [
    (const(0), ExponentField.constant(1.7), 0.0),
    (const(1), R_AFF, 1.0),
    (const(2), ExponentField.constant(2), 4.0),
])
def test_modular_examples(f, r, expected):
    assert modular(f, r, MESH) == pytest.approx(expected, abs=1e-12)


def test_luxemburg_zero():
    assert luxemburg_norm(const(0), R_AFF, MESH) == 0.0


@pytest.mark.parametrize("c, p", [(3.0, 2.0), (0.5, 1.3), (7.0, 4.0)])
def test_luxemburg_constant(c, p):
    # unit square: |Omega| = 1
    assert luxemburg_norm(const(c), ExponentField.constant(p), MESH) == pytest.approx(c, rel=1e-10)


def test_luxemburg_constant_on_scaled_domain():
    from synfem.mesh import Mesh
    m = Mesh(2.0 * MESH.vertices, MESH.elements)
    assert luxemburg_norm(const(3), ExponentField.constant(2), m) == pytest.approx(3 * 4 ** 0.5, rel=1e-10)


def test_luxemburg_x1():
    val = luxemburg_norm(lambda X: X[:, 0], ExponentField.constant(2), MESH)
    assert val == pytest.approx(1 / np.sqrt(3), rel=1e-10)


def test_luxemburg_unit_modular():
    f = lambda X: 1 + X[:, 0] * X[:, 1]
    lam = luxemburg_norm(f, R_AFF, MESH)
    assert modular(lambda X: f(X) / lam, R_AFF, MESH) == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 50.0))
def test_luxemburg_homogeneous(t):
    f = lambda X: np.sin(3 * X[:, 0]) + X[:, 1]
    a = luxemburg_norm(f, R_AFF, MESH)
    assert luxemburg_norm(lambda X: t * f(X), R_AFF, MESH) == pytest.approx(t * a, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_holder_inequality(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
    f = lambda X: a[0] + a[1] * X[:, 0] + a[2] * X[:, 1] ** 2
    g = lambda X: b[0] + b[1] * np.cos(X[:, 0]) + b[2] * X[:, 1]
    rule = triangle_rule(6)
    fg = sample(f, MESH, rule).values * sample(g, MESH, rule).values
    w = sample(f, MESH, rule).weights
    lhs = np.sum(w * fg)
    rhs = 2 * luxemburg_norm(f, R_AFF, MESH) * luxemburg_norm(g, conjugate(R_AFF), MESH)
    assert lhs <= rhs * (1 + 1e-10)


@pytest.mark.parametrize("p, q", [(2.0, 2.0), (1.5, 3.0)])
def test_conjugate_constant(p, q):
    rc = conjugate(ExponentField.constant(p))
    assert rc.r_minus == pytest.approx(q) and rc.r_plus == pytest.approx(q)


def test_conjugate_involution():
    back = conjugate(conjugate(R_AFF))
    pts = triangle_rule(4).points
    np.testing.assert_allclose(back.sample(MESH, pts), R_AFF.sample(MESH, pts), rtol=1e-13)
    assert (back.r_minus, back.r_plus) == pytest.approx((1.5, 2.0))


def test_exponent_bounds_enforced():
    with pytest.raises(ExponentError):
        ExponentField.constant(1.0)
    bad = ExponentField.from_function(r_affine, 1.5, 1.8)
    with pytest.raises(ExponentError):
        bad.sample(MESH, triangle_rule(2).points)


def test_log_holder():
    assert log_holder_estimate(ExponentField.constant(2), MESH) == 0.0
    from synfem.mesh import Mesh
    small = Mesh(0.35 * MESH.vertices, MESH.elements)
    val = log_holder_estimate(ExponentField.from_function(lambda X: 1.5 + X[:, 0], 1.5, 1.9), small)
    assert 0 < val < np.inf


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1.1, 4.0))
def test_key_witness_constant_exponent(seed, p):
    rng = np.random.default_rng(seed)
    f = rng.uniform(0, 1, 40)
    w = rng.uniform(0.1, 1, 40) / 40
    assert key_estimate_witness(f, w, np.full(40, p), m=1.0) <= 1 + 1e-12


def test_key_witness_unit_field():
    w = np.full(10, 0.05)
    rv = np.linspace(1.2, 3, 10)
    assert key_estimate_witness(np.ones(10), w, rv, m=1.0) <= 1


def test_local_exponent():
    rc = local_exponent(ExponentField.constant(1.8), MESH)
    np.testing.assert_allclose(rc.element_values, 1.8)
    rl = local_exponent(R_AFF, MESH)
    xmin = MESH.vertices[MESH.elements][:, :, 0].min(axis=1)
    np.testing.assert_allclose(rl.element_values, 1.5 + 0.5 * xmin, atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(1.01, 3.0), st.floats(0.0, 2.0))
def test_rational_law(c, a, b):
    law = ScalarExponentLaw("rational", a, b)
    assert a <= law(c) <= a + b
    lo, hi = law.bounds(0.0, 1.0)
    assert lo <= law(0.5) <= hi


def test_table_law_validation():
    with pytest.raises(ExponentError):
        ScalarExponentLaw("table", points=((0, 2.0), (1, 1.5), (2, 1.8)))
    law = ScalarExponentLaw("table", points=((0, 1.5), (1, 2.0)))
    assert law(0.5) == pytest.approx(1.75)
    assert law(9.0) == pytest.approx(2.0)
