"""Assembly of the momentum, constraint and concentration systems.

Every nonlinear integrand is evaluated with the degree-6 triangle rule.
Velocity test functions are phi_k = psi_a e_c with local index k = c*nloc + a
(matching ``FESpace.cell_dofs``).

Trilinear forms, with (v . grad w)_j = v_i d_i w_j:

    B_u[v, w, h] = 1/2 int (v . grad w) . h - (v . grad h) . w
    B_c[b, v, z] = 1/2 int z v . grad b - b v . grad z
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import physics
from .fespace import FEFunction, FESpace
from .linalg import TripletBuffer
from .quadrature import triangle_rule
from .varexp import ExponentField, sobolev_norm

RULE = triangle_rule(6)
FINE_RULE = triangle_rule(8)


class AssemblyError(ArithmeticError):
    pass


@dataclass
class AssembledSystem:
    """Jacobian/matrix ``A``, load ``rhs``; momentum systems also carry the
    divergence coupling ``B`` (B[i, k] = int Q_i div phi_k), the pressure means
    ``mean`` and the current nonlinear ``residual``."""

    A: sparse.csr_matrix
    rhs: np.ndarray
    B: sparse.csr_matrix | None = None
    mean: np.ndarray | None = None
    residual: np.ndarray | None = None


# ------------------------------------------------------------ local tables
def _vec_strain(V: FESpace, rule):
    """Voigt strain of every local velocity basis function: (ne, nq, 2*nloc, 3)."""
    t = V.tabulate(rule)
    d = t.dphi
    ne, nq, nloc, _ = d.shape
    E = np.zeros((ne, nq, 2 * nloc, 3))
    E[:, :, :nloc, 0] = d[..., 0]
    E[:, :, :nloc, 2] = d[..., 1]
    E[:, :, nloc:, 1] = d[..., 1]
    E[:, :, nloc:, 2] = d[..., 0]
    return E


def _vec_div(V: FESpace, rule):
    d = V.tabulate(rule).dphi
    return np.concatenate([d[..., 0], d[..., 1]], axis=2)   # (ne, nq, 2 nloc)


def _strain_voigt(U: FEFunction, rule):
    """Engineering strain [D11, D22, 2 D12] of U at quadrature points."""
    g = U.grads(rule)   # [.., c, i] = d_i U_c
    return np.stack([g[..., 0, 0], g[..., 1, 1], g[..., 0, 1] + g[..., 1, 0]], axis=-1)


def sym_grad(U: FEFunction, rule=RULE):
    g = U.grads(rule)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def _check_same(*fs):
    s = fs[0].space
    for f in fs[1:]:
        if f.space is not s:
            raise ValueError("arguments live in different spaces")


def _exponent_at(C, params, r, mesh, rule):
    if r is None:
        if C is None:
            raise ValueError("either a concentration or an exponent is needed")
        return params.exponent(C.values(rule))
    if isinstance(r, ExponentField):
        return r.sample(mesh, rule.points)
    return np.full((mesh.n_elements, len(rule)), float(r))


# ------------------------------------------------------------ trilinear forms
def trilinear_Bu(v: FEFunction, w: FEFunction, h: FEFunction, rule=RULE) -> float:
    _check_same(v, w, h)
    t = v.space.tabulate(rule)
    vv, wv, hv = v.values(rule), w.values(rule), h.values(rule)
    vgw = np.einsum("eqi,eqji->eqj", vv, w.grads(rule))
    vgh = np.einsum("eqi,eqji->eqj", vv, h.grads(rule))
    integrand = np.einsum("eqj,eqj->eq", vgw, hv) - np.einsum("eqj,eqj->eq", vgh, wv)
    return 0.5 * float(np.sum(t.weights * integrand))


def trilinear_Bc(b: FEFunction, v: FEFunction, z: FEFunction, rule=RULE) -> float:
    if b.space is not z.space and (b.space.family is not z.space.family or b.space.mesh is not z.space.mesh):
        raise ValueError("b and z must share the concentration space")
    if v.space.mesh is not z.space.mesh:
        raise ValueError("velocity and concentration live on different meshes")
    t = z.space.tabulate(rule)
    vv = v.values(rule)
    integrand = (z.values(rule) * np.einsum("eqi,eqi->eq", vv, b.grads(rule))
                 - b.values(rule) * np.einsum("eqi,eqi->eq", vv, z.grads(rule)))
    return 0.5 * float(np.sum(t.weights * integrand))


def convection_local(U: FEFunction, rule=RULE):
    """Local matrices of h, w -> B_u[U, w, h] (skew, component-diagonal): (ne, 2nloc, 2nloc)."""
    V = U.space
    t = V.tabulate(rule)
    Uq = U.values(rule)
    adv = np.einsum("eqi,eqbi->eqb", Uq, t.dphi)   # U . grad psi_b
    n = 0.5 * (np.einsum("eq,qa,eqb->eab", t.weights, t.phi, adv)
               - np.einsum("eq,eqa,qb->eab", t.weights, adv, t.phi))
    nloc = n.shape[1]
    out = np.zeros((n.shape[0], 2 * nloc, 2 * nloc))
    out[:, :nloc, :nloc] = n
    out[:, nloc:, nloc:] = n
    return out


def convection_newton_local(U: FEFunction, rule=RULE):
    """Local matrices of h, d -> B_u[d, U, h]: entry [(c,a),(d,b)] = 1/2 int psi_b (psi_a d_d U_c - d_d psi_a U_c)."""
    V = U.space
    t = V.tabulate(rule)
    Uq = U.values(rule)                # (ne, nq, c)
    G = U.grads(rule)                  # (ne, nq, c, d)
    ne, nq, nloc, _ = t.dphi.shape
    w = t.weights
    first = np.einsum("eq,qa,qb,eqcd->ecadb", w, t.phi, t.phi, G)
    second = np.einsum("eq,qb,eqad,eqc->ecadb", w, t.phi, t.dphi, Uq)
    return (0.5 * (first - second)).reshape(ne, 2 * nloc, 2 * nloc)


# ------------------------------------------------------------ momentum
def load_vector(V: FESpace, f, rule=RULE):
    """<f, phi_k>; ``f`` is a callable x -> (N, 2), an (ne, nq, 2) array, or None."""
    if f is None:
        return np.zeros(V.ndofs)
    t = V.tabulate(rule)
    if callable(f):
        fq = np.asarray(f(t.points.reshape(-1, 2)), dtype=float).reshape(t.points.shape)
    else:
        fq = np.asarray(f, dtype=float)
    loc = np.einsum("eq,qa,eqc->eca", t.weights, t.phi, fq).reshape(V.mesh.n_elements, -1)
    return np.bincount(V.cell_dofs.ravel(), loc.ravel(), minlength=V.ndofs)


def divergence_matrix(V: FESpace, Q: FESpace, rule=RULE):
    tq = Q.tabulate(rule)
    div = _vec_div(V, rule)
    loc = np.einsum("eq,qi,eqk->eik", tq.weights, tq.phi, div)
    buf = TripletBuffer((Q.ndofs, V.ndofs))
    buf.add(Q.cell_dofs, V.cell_dofs, loc)
    return buf.finalize()


def pressure_means(Q: FESpace, rule=RULE):
    t = Q.tabulate(rule)
    loc = np.einsum("eq,qi->ei", t.weights, t.phi)
    return np.bincount(Q.cell_dofs.ravel(), loc.ravel(), minlength=Q.ndofs)


def _guard(x, what):
    if not np.all(np.isfinite(x)):
        e = int(np.argwhere(~np.isfinite(x))[0][0])
        raise AssemblyError(f"{what} over/underflow at element {e}")
    return x


def stress_vector(U: FEFunction, C, params: physics.StressParams, r=None, rule=RULE):
    """int S(C, DU) : D(phi_k) for all velocity DOFs."""
    V = U.space
    t = V.tabulate(rule)
    rq = _exponent_at(C, params, r, V.mesh, rule)
    D = sym_grad(U, rule)
    S = _guard(physics.stress_r(rq, D, params), "stress")
    s = physics.to_voigt(S)
    E = _vec_strain(V, rule)
    loc = np.einsum("eq,eqkv,eqv->ek", t.weights, E, s)
    return np.bincount(V.cell_dofs.ravel(), loc.ravel(), minlength=V.ndofs)


def stress_matrix(U: FEFunction, C, params: physics.StressParams, r=None, newton=False, rule=RULE):
    """Linearized stress block: frozen viscosity (Picard) or the exact tangent (Newton)."""
    V = U.space
    t = V.tabulate(rule)
    rq = _exponent_at(C, params, r, V.mesh, rule)
    D = sym_grad(U, rule)
    if newton:
        T = physics.stress_jacobian_r(rq, D, params)
    else:
        T = physics.viscosity_r(rq, D, params)[..., None, None] * physics.VOIGT_IDENTITY
    _guard(T, "viscosity")
    E = _vec_strain(V, rule)
    ET = (E @ T) * t.weights[:, :, None, None]
    ne, nq, nk, _ = E.shape
    loc = ET.transpose(0, 2, 1, 3).reshape(ne, nk, -1) @ E.transpose(0, 1, 3, 2).reshape(ne, -1, nk)
    buf = TripletBuffer((V.ndofs, V.ndofs))
    buf.add(V.cell_dofs, V.cell_dofs, loc)
    return buf.finalize()


def _assemble_local(V, loc):
    buf = TripletBuffer((V.ndofs, V.ndofs))
    buf.add(V.cell_dofs, V.cell_dofs, loc)
    return buf.finalize()


def assemble_momentum(U: FEFunction, C, spaces, params: physics.StressParams, f=None, P=None,
                      r=None, linearization="picard", convection=True, rule=RULE) -> AssembledSystem:
    """Residual and Jacobian of the momentum equation at (U, P).

    residual_k = int S(C, DU):D(phi_k) + B_u[U, U, phi_k] - int P div phi_k - <f, phi_k>

    ``linearization`` is "picard" (frozen viscosity + Oseen transport) or
    "newton" (stress tangent + both transport derivatives). ``r`` overrides the
    exponent (constant or ExponentField); otherwise r = r(C).
    """
    V, Q = spaces[0], spaces[1]
    if U.space is not V:
        raise ValueError("U does not live in the velocity space")
    newton = linearization == "newton"
    if linearization not in ("picard", "newton"):
        raise ValueError(f"unknown linearization {linearization!r}")
    A = stress_matrix(U, C, params, r, newton, rule)
    res = stress_vector(U, C, params, r, rule)
    if convection:
        N = _assemble_local(V, convection_local(U, rule))
        res = res + N @ U.coeffs
        A = A + N
        if newton:
            A = A + _assemble_local(V, convection_newton_local(U, rule))
    B = divergence_matrix(V, Q, rule)
    load = load_vector(V, f, rule)
    if P is not None:
        res = res - B.T @ P.coeffs
    res = res - load
    return AssembledSystem(A.tocsr(), load, B, pressure_means(Q, rule), res)


def momentum_residual(U, P, C, spaces, params, f=None, r=None, convection=True, rule=RULE):
    """Momentum residual vector (all velocity DOFs) without assembling a Jacobian."""
    V, Q = spaces[0], spaces[1]
    res = stress_vector(U, C, params, r, rule) - load_vector(V, f, rule)
    if convection:
        res = res + _assemble_local(V, convection_local(U, rule)) @ U.coeffs
    if P is not None:
        res = res - divergence_matrix(V, Q, rule).T @ P.coeffs
    return res


def stokes_matrix(V: FESpace, nu=1.0, rule=triangle_rule(4)):
    """Independent assembly of nu int D(u):D(v) from full gradients (oracle for r = 2)."""
    t = V.tabulate(rule)
    d = t.dphi
    nloc = d.shape[2]
    lap = np.einsum("eq,eqai,eqbi->eab", t.weights, d, d)
    ne = V.mesh.n_elements
    loc = np.zeros((ne, 2 * nloc, 2 * nloc))
    # D(u):D(v) = 1/2 (grad u : grad v + grad u : grad v^T)
    for c in range(2):
        for e in range(2):
            cross = np.einsum("eq,eqa,eqb->eab", t.weights, d[..., e], d[..., c])
            blk = 0.5 * cross + (0.5 * lap if c == e else 0.0)
            loc[:, c * nloc:(c + 1) * nloc, e * nloc:(e + 1) * nloc] = blk
    return nu * _assemble_local(V, loc)


# ------------------------------------------------------------ concentration
def assemble_concentration(U: FEFunction, spaces, flux_params: physics.FluxParams, c_d=None, g=None,
                           rule=RULE) -> AssembledSystem:
    """Matrix of int K(|DU|) grad C . grad Z + B_c[C, U, Z] over all P1 nodes.

    Boundary conditions are not imposed here (see :func:`concentration_dirichlet`);
    ``g`` is an optional manufactured source <g, Z>.
    """
    Z = spaces[2]
    t = Z.tabulate(rule)
    D = sym_grad(U, rule)
    K = physics.conductivity(D, flux_params)
    loc = np.einsum("eq,eq,eqai,eqbi->eab", t.weights, K, t.dphi, t.dphi)
    Uq = U.values(rule)
    adv = np.einsum("eqi,eqbi->eqb", Uq, t.dphi)
    loc += 0.5 * (np.einsum("eq,qa,eqb->eab", t.weights, t.phi, adv)
                  - np.einsum("eq,eqa,qb->eab", t.weights, adv, t.phi))
    buf = TripletBuffer((Z.ndofs, Z.ndofs))
    buf.add(Z.cell_dofs, Z.cell_dofs, loc)
    A = buf.finalize()
    rhs = np.zeros(Z.ndofs)
    if g is not None:
        gq = np.asarray(g(t.points.reshape(-1, 2)), dtype=float).reshape(t.weights.shape) if callable(g) else g
        rhs = np.bincount(Z.cell_dofs.ravel(), np.einsum("eq,qa,eq->ea", t.weights, t.phi, gq).ravel(),
                          minlength=Z.ndofs)
    return AssembledSystem(A, rhs)


def stiffness_matrix(Z: FESpace, rule=triangle_rule(2)):
    t = Z.tabulate(rule)
    loc = np.einsum("eq,eqai,eqbi->eab", t.weights, t.dphi, t.dphi)
    buf = TripletBuffer((Z.ndofs, Z.ndofs))
    buf.add(Z.cell_dofs, Z.cell_dofs, loc)
    return buf.finalize()


def boundary_values(space: FESpace, c_d):
    """{dof: value} for a callable, constant or FEFunction boundary datum."""
    nodes = space.boundary_nodes
    if isinstance(c_d, FEFunction):
        vals = c_d.coeffs[nodes]
    elif callable(c_d):
        vals = np.asarray(c_d(space.node_coords[nodes]), dtype=float).reshape(-1)
    else:
        vals = np.full(len(nodes), float(c_d))
    return dict(zip(nodes.tolist(), vals.tolist()))


# ------------------------------------------------------------ checks
def bu_bound_check(v: FEFunction, w: FEFunction, h: FEFunction, r: ExponentField, rule=RULE) -> float:
    """|B_u[v,w,h]| / (||v||_{1,r} ||w||_{1,r} ||h||_{1,r}); 0 if any argument vanishes."""
    norms = [sobolev_norm(x, r, rule) for x in (v, w, h)]
    if min(norms) == 0.0:
        return 0.0
    return abs(trilinear_Bu(v, w, h, rule)) / float(np.prod(norms))


def quadrature_drift(U: FEFunction, C, params: physics.StressParams, r=None) -> float:
    """Relative change of the stress residual between the degree-6 and degree-8 rules."""
    a = stress_vector(U, C, params, r, RULE)
    b = stress_vector(U, C, params, r, FINE_RULE)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
