"""Lagrange finite element spaces on triangles.

Velocity uses continuous P2 (optionally enriched by the cubic bubble),
pressure uses discontinuous P0 or P1, concentration uses continuous P1.
Global node numbering: vertices, then edge midpoints, then element bubbles,
each in mesh-entity order. Vector spaces are component-blocked, i.e. the DOF
of component ``c`` at node ``k`` is ``c * n_nodes + k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .mesh import Mesh

_DLAM = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def _bary(pts):
    pts = np.atleast_2d(pts)
    return np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])


class Family:
    name = ""
    nloc = 0
    continuous = True
    degree = 0
    ref_nodes: np.ndarray

    def values(self, pts):
        raise NotImplementedError

    def grads(self, pts):
        raise NotImplementedError


class P0(Family):
    name, nloc, continuous, degree = "P0", 1, False, 0
    ref_nodes = np.array([[1 / 3, 1 / 3]])

    def values(self, pts):
        return np.ones((len(np.atleast_2d(pts)), 1))

    def grads(self, pts):
        return np.zeros((len(np.atleast_2d(pts)), 1, 2))


class P1(Family):
    name, nloc, continuous, degree = "P1", 3, True, 1
    ref_nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def values(self, pts):
        return _bary(pts)

    def grads(self, pts):
        return np.broadcast_to(_DLAM, (len(np.atleast_2d(pts)), 3, 2)).copy()


class P1disc(P1):
    name, continuous = "P1disc", False


class P2(Family):
    name, nloc, continuous, degree = "P2", 6, True, 2
    ref_nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
    _pairs = ((0, 1), (1, 2), (2, 0))

    def values(self, pts):
        L = _bary(pts)
        v = [L[:, i] * (2 * L[:, i] - 1) for i in range(3)]
        v += [4 * L[:, a] * L[:, b] for a, b in self._pairs]
        return np.column_stack(v)

    def grads(self, pts):
        L = _bary(pts)
        g = [(4 * L[:, i] - 1)[:, None] * _DLAM[i] for i in range(3)]
        g += [4 * (L[:, a][:, None] * _DLAM[b] + L[:, b][:, None] * _DLAM[a]) for a, b in self._pairs]
        return np.stack(g, axis=1)


class P2Bubble(P2):
    """P2 plus the cubic bubble 27 l0 l1 l2, with a nodal basis on 7 points."""

    name, nloc, degree = "P2B", 7, 3
    ref_nodes = np.vstack([P2.ref_nodes, [[1 / 3, 1 / 3]]])
    # P2 basis values at the centroid
    _at_c = np.array([-1 / 9] * 3 + [4 / 9] * 3)

    def values(self, pts):
        L = _bary(pts)
        b = 27 * L[:, 0] * L[:, 1] * L[:, 2]
        v = super().values(pts) - np.outer(b, self._at_c)
        return np.column_stack([v, b])

    def grads(self, pts):
        L = _bary(pts)
        db = 27 * (L[:, 1:2] * L[:, 2:3] * _DLAM[0] + L[:, 0:1] * L[:, 2:3] * _DLAM[1]
                   + L[:, 0:1] * L[:, 1:2] * _DLAM[2])
        g = super().grads(pts) - self._at_c[None, :, None] * db[:, None, :]
        return np.concatenate([g, db[:, None, :]], axis=1)


FAMILIES = {"P0": P0(), "P1": P1(), "P1disc": P1disc(), "P2": P2(), "P2B": P2Bubble()}

PAIRINGS = {
    "P2_P0": ("P2", "P0"),
    "P2bubble_P1disc": ("P2B", "P1disc"),
}
PAIRING_ALIASES = {"p2p0": "P2_P0", "crouzeix-raviart": "P2bubble_P1disc"}


@dataclass
class Tabulation:
    phi: np.ndarray      # (nq, nloc)
    dphi: np.ndarray     # (ne, nq, nloc, 2) physical gradients
    weights: np.ndarray  # (ne, nq) physical quadrature weights
    points: np.ndarray   # (ne, nq, 2) physical points


class FESpace:
    """Scalar or vector Lagrange space over a mesh.

    ``dirichlet`` marks spaces whose members vanish on the boundary (V^n, Z^n);
    their dimension counts free DOFs only, while coefficient vectors still
    span all nodes so lifted functions (Z^n + c_d) share the layout.
    """

    def __init__(self, mesh: Mesh, family: str, ncomp: int = 1, dirichlet: bool = False):
        self.mesh = mesh
        self.family = FAMILIES[family]
        self.ncomp = ncomp
        self.dirichlet = dirichlet
        ne = mesh.n_elements
        fam = self.family
        if fam.continuous:
            cols = [mesh.elements]
            nodes = [mesh.vertices]
            n = mesh.n_vertices
            bnodes = [np.flatnonzero(mesh.boundary_vertex_mask)]
            if fam.degree >= 2:
                cols.append(n + mesh.element_edges)
                nodes.append(mesh.edge_midpoints)
                bnodes.append(n + mesh.boundary_edge_ids)
                n += mesh.n_edges
            if fam.nloc == 7:
                cols.append((n + np.arange(ne))[:, None])
                nodes.append(mesh.barycenters)
                n += ne
            self.cell_nodes = np.hstack(cols)
            self.node_coords = np.vstack(nodes)
            self.boundary_nodes = np.concatenate(bnodes)
        else:
            self.cell_nodes = np.arange(ne * fam.nloc).reshape(ne, fam.nloc)
            self.node_coords = mesh.map_points(fam.ref_nodes).reshape(-1, 2)
            self.boundary_nodes = np.zeros(0, dtype=np.int64)
        self.n_nodes = len(self.node_coords)
        self.ndofs = ncomp * self.n_nodes
        self.cell_dofs = np.hstack([c * self.n_nodes + self.cell_nodes for c in range(ncomp)])
        self.boundary_dofs = np.concatenate([c * self.n_nodes + self.boundary_nodes for c in range(ncomp)])
        mask = np.ones(self.ndofs, dtype=bool)
        if dirichlet:
            mask[self.boundary_dofs] = False
        self.free_dofs = np.flatnonzero(mask)
        self._tab = {}

    @property
    def dim(self):
        return len(self.free_dofs)

    @property
    def tag(self):
        return f"{self.family.name}" + ("x2" if self.ncomp == 2 else "")

    def tabulate(self, rule) -> Tabulation:
        key = id(rule)
        if key not in self._tab:
            m = self.mesh
            ref = self.family.grads(rule.points)
            dphi = np.einsum("eji,qaj->eqai", m.jacobians_inv, ref)
            w = np.abs(np.linalg.det(m.jacobians))[:, None] * rule.weights[None, :]
            self._tab[key] = Tabulation(self.family.values(rule.points), dphi, w, m.map_points(rule.points))
        return self._tab[key]

    def mass_matrix(self, rule=None):
        from .quadrature import triangle_rule

        rule = rule or triangle_rule(2 * max(self.family.degree, 1))
        t = self.tabulate(rule)
        local = np.einsum("eq,qa,qb->eab", t.weights, t.phi, t.phi)
        n = self.n_nodes
        M = sparse.coo_matrix(
            (local.ravel(),
             (np.repeat(self.cell_nodes, self.family.nloc, axis=1).ravel(),
              np.tile(self.cell_nodes, (1, self.family.nloc)).ravel())),
            shape=(n, n)).tocsr()
        if self.ncomp > 1:
            M = sparse.block_diag([M] * self.ncomp, format="csr")
        return M

    def __repr__(self):
        return f"FESpace({self.tag}, ndofs={self.ndofs}, dim={self.dim})"


class FEFunction:
    """Coefficient vector over an :class:`FESpace`."""

    def __init__(self, space: FESpace, coeffs=None):
        self.space = space
        if coeffs is None:
            coeffs = np.zeros(space.ndofs)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.ndofs,):
            raise ValueError(f"coefficient vector has shape {coeffs.shape}, expected ({space.ndofs},)")
        self.coeffs = coeffs

    def copy(self):
        return FEFunction(self.space, self.coeffs.copy())

    def _local(self):
        s = self.space
        return self.coeffs[s.cell_dofs].reshape(s.mesh.n_elements, s.ncomp, s.family.nloc)

    def values(self, rule):
        """Values at the quadrature points: (ne, nq) or (ne, nq, ncomp)."""
        t = self.space.tabulate(rule)
        v = np.einsum("eca,qa->eqc", self._local(), t.phi)
        return v[..., 0] if self.space.ncomp == 1 else v

    def grads(self, rule):
        """Gradients at quadrature points: (ne, nq, 2) or (ne, nq, ncomp, 2) with [.., c, i] = d_i u_c."""
        t = self.space.tabulate(rule)
        g = np.einsum("eca,eqai->eqci", self._local(), t.dphi)
        return g[..., 0, :] if self.space.ncomp == 1 else g

    def values_at(self, ref_points):
        """Values at arbitrary reference points on every element."""
        phi = self.space.family.values(ref_points)
        v = np.einsum("eca,qa->eqc", self._local(), phi)
        return v[..., 0] if self.space.ncomp == 1 else v

    def __add__(self, other):
        return FEFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return FEFunction(self.space, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return FEFunction(self.space, a * self.coeffs)

    __rmul__ = __mul__


def build_spaces(mesh: Mesh, pairing: str = "P2_P0"):
    """Return (V, Q, Z): velocity, pressure and concentration spaces."""
    pairing = PAIRING_ALIASES.get(pairing, pairing)
    if pairing not in PAIRINGS:
        raise ValueError(f"unknown pairing {pairing!r}; choose from {sorted(PAIRINGS) + sorted(PAIRING_ALIASES)}")
    vfam, qfam = PAIRINGS[pairing]
    V = FESpace(mesh, vfam, ncomp=2, dirichlet=True)
    Q = FESpace(mesh, qfam)
    Z = FESpace(mesh, "P1", dirichlet=True)
    V.pairing = Q.pairing = pairing
    return V, Q, Z


def interpolate(space: FESpace, g) -> FEFunction:
    """Nodal interpolant of a point-evaluable ``g(x) -> (N,)`` or ``(N, ncomp)``."""
    vals = np.asarray(g(space.node_coords), dtype=float)
    if space.ncomp == 1:
        vals = np.broadcast_to(vals.reshape(-1), (space.n_nodes,))
        return FEFunction(space, np.array(vals, dtype=float))
    vals = np.broadcast_to(vals.reshape(space.n_nodes, -1), (space.n_nodes, space.ncomp))
    return FEFunction(space, np.asarray(vals.T, dtype=float).ravel())


def evaluate(u: FEFunction, element: int, ref_point):
    """Value and physical gradient of ``u`` at one reference point of one element."""
    s = u.space
    if not 0 <= element < s.mesh.n_elements:
        raise IndexError(f"element id {element} out of range")
    ref_point = np.asarray(ref_point, dtype=float).reshape(1, 2)
    phi = s.family.values(ref_point)[0]
    dphi = s.family.grads(ref_point)[0] @ s.mesh.jacobians_inv[element]
    loc = u.coeffs[s.cell_dofs[element]].reshape(s.ncomp, s.family.nloc)
    val = loc @ phi
    grad = loc @ dphi
    if s.ncomp == 1:
        return float(val[0]), grad[0]
    return val, grad


def apply_dirichlet(space: FESpace, A, rhs, values: dict):
    """Impose ``u[dof] = value`` by symmetric elimination.

    Constrained rows and columns become identity rows/columns, the known
    values are moved to the right-hand side. Works on systems whose leading
    block is indexed by ``space`` DOFs (e.g. a velocity-pressure saddle system).
    """
    dofs = np.fromiter(values.keys(), dtype=np.int64, count=len(values))
    vals = np.fromiter(values.values(), dtype=float, count=len(values))
    allowed = np.zeros(space.ndofs, dtype=bool)
    allowed[space.boundary_dofs] = True
    if len(dofs) and (dofs.max() >= space.ndofs or not allowed[dofs].all()):
        bad = dofs[(dofs >= space.ndofs) | ~allowed[np.minimum(dofs, space.ndofs - 1)]][0]
        raise ValueError(f"DOF {bad} is not a boundary DOF of {space!r}")
    A = sparse.csr_matrix(A)
    n = A.shape[0]
    g = np.zeros(n)
    g[dofs] = vals
    rhs = np.asarray(rhs, dtype=float) - A @ g
    keep = np.ones(n)
    keep[dofs] = 0.0
    K = sparse.diags(keep)
    A = (K @ A @ K + sparse.diags(1.0 - keep)).tocsr()
    rhs = rhs * keep
    rhs[dofs] = vals
    return A, rhs
