import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from synfem.fespace import FEFunction, FESpace, apply_dirichlet, build_spaces, evaluate, interpolate
from synfem.mesh import refine_uniform, unit_square
from synfem.quadrature import triangle_rule


def test_p2p0_dims_two_elements(square2):
    V, Q, Z = build_spaces(square2, "P2_P0")
    # one interior P2 node (diagonal midpoint); all four P1 nodes are on the boundary
    assert (V.dim, Q.dim, Z.dim) == (2, 2, 0)


def test_z_dim_crisscross():
    _, _, Z = build_spaces(unit_square(1, "crisscross"), "P2_P0")
    assert Z.dim == 1


def test_refined_pressure_dim(square2):
    _, Q, _ = build_spaces(refine_uniform(square2), "P2_P0")
    assert Q.dim == 8


def test_bubble_pairing_dims(square2):
    V, Q, _ = build_spaces(square2, "P2bubble_P1disc")
    assert Q.dim == 6
    assert V.dim == 2 * (1 + 2)   # diagonal midpoint + two bubbles


def test_unknown_pairing(square2):
    with pytest.raises(ValueError, match="unknown pairing"):
        build_spaces(square2, "P1_P1")


def test_interpolate_constant_into_lifted_z():
    _, _, Z = build_spaces(unit_square(3), "P2_P0")
    np.testing.assert_array_equal(interpolate(Z, lambda X: np.ones(len(X))).coeffs, 1.0)


@pytest.mark.parametrize("family", ["P2", "P2B"])
@pytest.mark.parametrize("g", [lambda X: 1 + 2 * X[:, 0] - X[:, 1], lambda X: X[:, 0] * X[:, 1]])
def test_quadratic_reproduction(family, g, rng):
    m = unit_square(3, "crisscross")
    S = FESpace(m, family)
    u = interpolate(S, g)
    ref = rng.dirichlet([1, 1, 1], size=20)[:, 1:]
    X = m.map_points(ref)
    np.testing.assert_allclose(u.values_at(ref), g(X.reshape(-1, 2)).reshape(X.shape[:2]), atol=1e-12)


def test_evaluate_gradients(rng):
    m = unit_square(2)
    S = FESpace(m, "P2")
    c = interpolate(S, lambda X: np.full(len(X), 3.0))
    x1 = interpolate(S, lambda X: X[:, 0])
    for e in range(m.n_elements):
        p = rng.dirichlet([1, 1, 1])[1:]
        assert np.allclose(evaluate(c, e, p)[1], 0, atol=1e-12)
        np.testing.assert_allclose(evaluate(x1, e, p)[1], [1, 0], atol=1e-12)
    with pytest.raises(IndexError):
        evaluate(c, m.n_elements, [0.2, 0.2])


@pytest.mark.parametrize("family", ["P1", "P2", "P2B"])
def test_nodal_basis(family):
    m = unit_square(1)
    S = FESpace(m, family)
    ref = S.family.ref_nodes
    for a in range(S.family.nloc):
        u = FEFunction(S)
        u.coeffs[S.cell_nodes[0, a]] = 1.0
        vals = u.values_at(ref)[0]
        np.testing.assert_allclose(vals, np.eye(S.family.nloc)[a], atol=1e-13)


def test_vector_space_layout():
    V, _, _ = build_spaces(unit_square(2), "P2_P0")
    u = interpolate(V, lambda X: np.column_stack([X[:, 0], -X[:, 1]]))
    g = u.grads(triangle_rule(2))
    np.testing.assert_allclose(g[..., 0, 0], 1, atol=1e-12)
    np.testing.assert_allclose(g[..., 1, 1], -1, atol=1e-12)


@pytest.mark.parametrize("value", [0.0, 5.0])
def test_apply_dirichlet_poisson(value):
    from synfem.assembly import stiffness_matrix
    _, _, Z = build_spaces(unit_square(4, "crisscross"), "P2_P0")
    A = stiffness_matrix(Z)
    vals = {int(d): value for d in Z.boundary_dofs}
    K, b = apply_dirichlet(Z, A, np.zeros(Z.ndofs), vals)
    x = sparse.linalg.spsolve(K.tocsc(), b)
    np.testing.assert_array_equal(x[Z.boundary_dofs], value)
    np.testing.assert_allclose(x, value, atol=1e-12)


def test_apply_dirichlet_rejects_interior(square2):
    _, _, Z = build_spaces(unit_square(2), "P2_P0")
    interior = int(np.setdiff1d(np.arange(Z.ndofs), Z.boundary_dofs)[0])
    with pytest.raises(ValueError, match="not a boundary DOF"):
        apply_dirichlet(Z, sparse.identity(Z.ndofs), np.zeros(Z.ndofs), {interior: 1.0})


def test_mass_matrix_total():
    S = FESpace(unit_square(3), "P2", ncomp=2)
    M = S.mass_matrix()
    one = np.ones(S.ndofs)
    assert one @ M @ one == pytest.approx(2.0)


def test_interpolation_error_decreases():
    g = lambda X: np.sin(np.pi * X[:, 0]) * np.exp(X[:, 1])
    rule = triangle_rule(6)
    errs = []
    m = unit_square(2)
    for _ in range(4):
        S = FESpace(m, "P2")
        u = interpolate(S, g)
        t = S.tabulate(rule)
        errs.append(np.sqrt(np.sum(t.weights * (u.values(rule) - g(t.points.reshape(-1, 2)).reshape(t.weights.shape)) ** 2)))
        m = refine_uniform(m)
    assert all(b < a for a, b in zip(errs, errs[1:]))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_interpolation_is_linear(seed):
    rng = np.random.default_rng(seed)
    S = FESpace(unit_square(2, "crisscross"), "P2B", ncomp=2)
    a, b = rng.standard_normal(2)
    f = lambda X: np.column_stack([np.sin(X[:, 0]), X[:, 1] ** 3])
    g = lambda X: np.column_stack([X[:, 0] * X[:, 1], np.cos(X[:, 1])])
    lhs = interpolate(S, lambda X: a * f(X) + b * g(X)).coeffs
    np.testing.assert_allclose(lhs, a * interpolate(S, f).coeffs + b * interpolate(S, g).coeffs, atol=1e-12)
