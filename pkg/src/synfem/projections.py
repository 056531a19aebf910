"""Quasi-interpolation operators onto the discrete spaces.

* :func:`project_div` -- Fortin-type operator into V^n: Clement averaging of
  element-local L2 projections, then edge-midpoint and bubble corrections so
  that the divergence moments against Q^n are preserved.
* :func:`project_Q` -- element-local L2 projection onto Q^n.
* :func:`project_Z` -- Clement averaging onto P1 with zero boundary values.

Inputs are point-evaluable fields: a callable ``v(x) -> (N,)`` / ``(N, 2)``
(an optional ``v.grad(x) -> (N, [2,] 2)`` attribute supplies exact
gradients; otherwise central differences are used) or an FEFunction.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .assembly import divergence_matrix
from .fespace import FEFunction, FESpace
from .mesh import LOCAL_EDGES, Mesh, patch_matrix
from .quadrature import line_rule, triangle_rule
from .varexp import ExponentField, QuadField, modular

RULE = triangle_rule(8)
_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class ProjectionError(RuntimeError):
    pass


# ------------------------------------------------------------ field access
def values_on(v, mesh: Mesh, ref_points):
    """Values of ``v`` at reference points of every element: (ne, nq[, ncomp])."""
    ref_points = np.atleast_2d(ref_points)
    if isinstance(v, FEFunction):
        return v.values_at(ref_points)
    X = mesh.map_points(ref_points)
    out = np.asarray(v(X.reshape(-1, 2)), dtype=float)
    return out.reshape(X.shape[:2] + out.shape[1:])


def grads_on(v, mesh: Mesh, ref_points, step=1e-6):
    """Gradients at reference points: (ne, nq, 2) or (ne, nq, ncomp, 2), [.., c, i] = d_i v_c."""
    ref_points = np.atleast_2d(ref_points)
    if isinstance(v, FEFunction):
        s = v.space
        ref = s.family.grads(ref_points)
        dphi = np.einsum("eji,qaj->eqai", mesh.jacobians_inv, ref)
        loc = v.coeffs[s.cell_dofs].reshape(mesh.n_elements, s.ncomp, -1)
        g = np.einsum("eca,eqai->eqci", loc, dphi)
        return g[..., 0, :] if s.ncomp == 1 else g
    X = mesh.map_points(ref_points).reshape(-1, 2)
    if hasattr(v, "grad"):
        g = np.asarray(v.grad(X), dtype=float)
    else:
        cols = []
        for i in range(2):
            dx = np.zeros(2)
            dx[i] = step
            cols.append((np.asarray(v(X + dx), dtype=float) - np.asarray(v(X - dx), dtype=float)) / (2 * step))
        g = np.stack(cols, axis=-1)
    return g.reshape(mesh.n_elements, len(ref_points), *g.shape[1:])


def _local_l2(space: FESpace, v, rule=RULE):
    """Element-local L2 projection coefficients onto the local space: (ne, ncomp, nloc)."""
    fam = space.family
    phi = fam.values(rule.points)
    M = np.einsum("q,qa,qb->ab", rule.weights, phi, phi)
    vals = values_on(v, space.mesh, rule.points)
    if vals.ndim == 2:
        vals = vals[..., None]
    rhs = np.einsum("q,qa,eqc->eca", rule.weights, phi, vals)
    return np.linalg.solve(M, rhs.reshape(-1, fam.nloc).T).T.reshape(rhs.shape)


def _average(space: FESpace, local):
    """Average element-local nodal values over the elements sharing each node."""
    nodes = space.cell_nodes.ravel()
    counts = np.bincount(nodes, minlength=space.n_nodes)
    out = np.empty((space.ncomp, space.n_nodes))
    for c in range(space.ncomp):
        out[c] = np.bincount(nodes, local[:, c, :].ravel(), minlength=space.n_nodes) / counts
    return out


# ------------------------------------------------------------ divergence moments
def _edge_geometry(mesh: Mesh):
    """Reference edge end points and physical outward normals * length: (ne, 3, 2)."""
    P = mesh.vertices[mesh.elements]
    a = P[:, [0, 1, 2]]
    b = P[:, [1, 2, 0]]
    t = b - a
    return np.stack([t[..., 1], -t[..., 0]], axis=-1)   # counter-clockwise elements


def divergence_moments(v, Q: FESpace, rule=RULE):
    """<div v, Q_i> for every pressure basis function, by integration by parts.

    int_E div v q = int_{dE} (v . n) q - int_E v . grad q, so only point values
    of v are needed.
    """
    mesh = Q.mesh
    s, w = line_rule(8)
    nrm = _edge_geometry(mesh)
    fam = Q.family
    ne = mesh.n_elements
    out = np.zeros((ne, fam.nloc))
    for k, (i, j) in enumerate(LOCAL_EDGES):
        ref = (1 - s)[:, None] * _REF_VERTS[i] + s[:, None] * _REF_VERTS[j]
        vv = values_on(v, mesh, ref)                       # (ne, ns, 2)
        q = fam.values(ref)                                # (ns, nloc)
        out += np.einsum("s,esc,ec,sa->ea", w, vv, nrm[:, k], q)
    vv = values_on(v, mesh, rule.points)
    dq = np.einsum("eji,qaj->eqai", mesh.jacobians_inv, fam.grads(rule.points))
    wq = np.abs(np.linalg.det(mesh.jacobians))[:, None] * rule.weights
    out -= np.einsum("eq,eqc,eqac->ea", wq, vv, dq)
    return np.bincount(Q.cell_dofs.ravel(), out.ravel(), minlength=Q.ndofs)


def divergence_defect(Pv: FEFunction, v, Q: FESpace) -> float:
    """max_i |<div Pv, Q_i> - <div v, Q_i>|."""
    B = divergence_matrix(Pv.space, Q)
    return float(np.abs(B @ Pv.coeffs - divergence_moments(v, Q)).max()) if Q.ndofs else 0.0


# ------------------------------------------------------------ operators
def project_div(v, V: FESpace, Q: FESpace, tol=1e-9, check=True) -> FEFunction:
    """Fortin-type projection into V^n preserving <div ., Q> for all Q in Q^n."""
    if V.ncomp != 2 or V.family.degree < 2:
        raise ValueError("project_div needs a vector P2 or P2-bubble velocity space")
    mesh = V.mesh
    nodal = _average(V, _local_l2(V, v))
    nodal[:, V.boundary_nodes] = 0.0
    coeffs = nodal.ravel()
    nn = V.n_nodes

    # edge correction: match the vector edge integrals on interior edges
    s, w = line_rule(8)
    interior = np.flatnonzero(~np.isin(np.arange(mesh.n_edges), mesh.boundary_edge_ids))
    if len(interior):
        E = mesh.edge_elements[interior, 0]
        k = np.argmax(mesh.element_edges[E] == interior[:, None], axis=1)
        ends = np.array(LOCAL_EDGES)[k]
        ref = (1 - s)[None, :, None] * _REF_VERTS[ends[:, 0]][:, None, :] \
            + s[None, :, None] * _REF_VERTS[ends[:, 1]][:, None, :]          # (ni, ns, 2)
        X = np.einsum("eij,esj->esi", mesh.jacobians[E], ref) + mesh.vertices[mesh.elements[E, 0]][:, None, :]
        if isinstance(v, FEFunction):
            vals = np.stack([_eval_fe(v, E, ref[:, i]) for i in range(len(s))], axis=1)
        else:
            vals = np.asarray(v(X.reshape(-1, 2)), dtype=float).reshape(len(E), len(s), 2)
        cur = np.stack([_eval_fe(FEFunction(V, coeffs), E, ref[:, i]) for i in range(len(s))], axis=1)
        delta = np.einsum("s,esc->ec", w, vals - cur) / (2.0 / 3.0)   # int_e psi_mid = 2/3 |e|
        mid = mesh.n_vertices + interior
        for c in range(2):
            coeffs[c * nn + mid] += delta[:, c]

    if V.family.nloc == 7 and Q.family.nloc == 3:
        coeffs = _bubble_correction(FEFunction(V, coeffs), v, Q)
    out = FEFunction(V, coeffs)
    if check:
        d = divergence_defect(out, v, Q)
        if d > tol:
            raise ProjectionError(f"divergence defect {d:.3e} exceeds {tol:.1e} (does v vanish on the boundary?)")
    return out


def _eval_fe(u: FEFunction, elements, ref):
    """Values of u at one reference point per listed element: (n, ncomp)."""
    s = u.space
    phi = s.family.values(ref)                               # (n, nloc)
    loc = u.coeffs[s.cell_dofs[elements]].reshape(len(elements), s.ncomp, -1)
    return np.einsum("nca,na->nc", loc, phi)


def _bubble_correction(Pv: FEFunction, v, Q: FESpace):
    """Fix the linear divergence moments elementwise with the cubic bubble DOFs.

    Adding beta_c b e_c leaves edge integrals unchanged and shifts
    int_E div(.) q by -beta . grad q * int_E b, with int_E b = 9|E|/20.
    """
    V = Pv.space
    mesh = V.mesh
    defect = divergence_moments(v, Q) - divergence_matrix(V, Q) @ Pv.coeffs
    d = defect[Q.cell_dofs]                                  # (ne, 3) moments against the local P1 basis
    grads = np.einsum("eji,aj->eai", mesh.jacobians_inv, Q.family.grads(np.zeros((1, 2)))[0])  # (ne, 3, 2)
    area = mesh.areas
    # solve -(9|E|/20) grads @ beta = d in least squares (sum of moments is already matched)
    G = -(9 * area / 20)[:, None, None] * grads
    beta = np.einsum("eia,ea->ei", np.linalg.pinv(G), d)
    coeffs = Pv.coeffs.copy()
    bubble = V.cell_nodes[:, 6]
    coeffs[bubble] += beta[:, 0]
    coeffs[V.n_nodes + bubble] += beta[:, 1]
    return coeffs


def project_Q(q, Q: FESpace, rule=RULE) -> FEFunction:
    """Element-local L2 projection onto the discontinuous pressure space."""
    if Q.family.continuous:
        raise ValueError("project_Q expects a discontinuous pressure space")
    local = _local_l2(Q, q, rule)[:, 0, :]
    out = np.zeros(Q.ndofs)
    out[Q.cell_dofs] = local
    return FEFunction(Q, out)


def project_Z(z, Z: FESpace, rule=RULE) -> FEFunction:
    """Clement-type averaging of local P1 projections; boundary values set to zero."""
    nodal = _average(Z, _local_l2(Z, z, rule))[0]
    if Z.dirichlet:
        nodal[Z.boundary_nodes] = 0.0
    return FEFunction(Z, nodal)


# ------------------------------------------------------------ stability
def _element_integrals(f, mesh, rule=RULE, grad=False):
    g = grads_on(f, mesh, rule.points) if grad else values_on(f, mesh, rule.points)
    axes = tuple(range(2, g.ndim))
    mag = np.sqrt(np.sum(g ** 2, axis=axes)) if axes else np.abs(g)
    w = np.abs(np.linalg.det(mesh.jacobians))[:, None] * rule.weights
    return np.sum(w * mag, axis=1)


def _local_ratio(Pv, v, mesh, patch=True, with_grad=True):
    """(avg_E |Pv| + h_E avg_E |grad Pv|) / (avg_S |v| + h_E avg_S |grad v|) per element."""
    h = mesh.diameters
    area = mesh.areas
    lhs = _element_integrals(Pv, mesh) / area
    a = _element_integrals(v, mesh)
    if with_grad:
        lhs = lhs + h * _element_integrals(Pv, mesh, grad=True) / area
        b = _element_integrals(v, mesh, grad=True)
    else:
        b = np.zeros_like(a)
    if patch:
        S = patch_matrix(mesh)
        rhs = (S @ a + h * (S @ b)) / (S @ area)
    else:
        rhs = (a + h * b) / area
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, np.inf, 0.0))
    return ratio


@dataclass
class ProjectionReport:
    c1_ratios: np.ndarray
    c2_ratios: np.ndarray
    c3_ratios: np.ndarray
    div_defect: float
    extra: dict = field(default_factory=dict)

    @property
    def c1(self):
        return float(self.c1_ratios.max())

    @property
    def c2(self):
        return float(self.c2_ratios.max())

    @property
    def c3(self):
        return float(self.c3_ratios.max())

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["element", "c1_ratio", "c2_ratio", "c3_ratio"])
            for e, row in enumerate(zip(self.c1_ratios, self.c2_ratios, self.c3_ratios)):
                wr.writerow([e] + [f"{x:.12g}" for x in row])


def projection_report(v, q, z, spaces) -> ProjectionReport:
    """Local stability witnesses of the three operators for sample inputs v, q, z."""
    V, Q, Z = spaces
    mesh = V.mesh
    Pv = project_div(v, V, Q, check=False)
    c1 = _local_ratio(Pv, v, mesh)
    c2 = _local_ratio(project_Q(q, Q), q, mesh, patch=False, with_grad=False)
    c3 = _local_ratio(project_Z(z, Z), z, mesh)
    return ProjectionReport(c1, c2, c3, divergence_defect(Pv, v, Q))


def variable_exponent_stability_check(v, r: ExponentField, V: FESpace, Q: FESpace, rule=RULE) -> dict:
    """Compare int |grad Pi_div v|^r with int |grad v|^r; slack h_max^{d+1} with d = 2."""
    mesh = V.mesh
    Pv = project_div(v, V, Q)
    gP = grads_on(Pv, mesh, rule.points)
    gv = grads_on(v, mesh, rule.points)
    mag = lambda g: np.sqrt(np.sum(g ** 2, axis=(2, 3)))
    lhs = modular(QuadField(mesh, mag(gP), rule), r)
    rhs = modular(QuadField(mesh, mag(gv), rule), r)
    slack = mesh.h_max ** 3
    ratio = (lhs - slack) / rhs if rhs > 0 else 0.0
    return {"lhs": lhs, "rhs": rhs, "slack": slack, "ratio": float(ratio), "plain_ratio": lhs / rhs if rhs else 0.0}
