"""Conforming triangulations of convex polygons.

A :class:`Mesh` stores vertex coordinates, counter-clockwise element
connectivity and the boundary edges. Derived connectivity (unique edges,
element-to-edge table, neighbours, vertex patches) is computed once at
construction; meshes are treated as immutable afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised for unreadable, non-conforming or non-convex meshes."""


# local edges of a triangle, in the order used for edge midpoint DOFs
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


@dataclass(frozen=True, eq=False)
class AffineMap:
    """x = matrix @ xi + offset, mapping the reference simplex onto an element."""

    matrix: np.ndarray
    offset: np.ndarray
    inverse: np.ndarray = field(init=False)

    def __post_init__(self):
        det = np.linalg.det(self.matrix)
        if det == 0.0:
            raise MeshError("affine map is singular")
        object.__setattr__(self, "inverse", np.linalg.inv(self.matrix))

    def __call__(self, xi):
        return np.asarray(xi) @ self.matrix.T + self.offset

    def pullback(self, x):
        return (np.asarray(x) - self.offset) @ self.inverse.T


@dataclass(frozen=True)
class Patch:
    center: int
    members: frozenset


class Mesh:
    """Triangulation with derived edge and neighbour structure.

    Parameters
    ----------
    vertices : (nv, 2) array
    elements : (ne, 3) int array of vertex ids
    boundary_edges : (nb, 2) int array, optional
        If omitted, computed from the elements. If given, it must agree with
        the set of edges owned by exactly one element.
    """

    def __init__(self, vertices, elements, boundary_edges=None, check_convex=True):
        vertices = np.asarray(vertices, dtype=float)
        elements = np.asarray(elements, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2 or len(vertices) < 3:
            raise MeshError("need at least 3 vertices with 2 coordinates")
        if elements.ndim != 2 or elements.shape[1] != 3 or len(elements) == 0:
            raise MeshError("elements must be a non-empty (n, 3) array")
        if elements.min() < 0 or elements.max() >= len(vertices):
            raise MeshError("element refers to a vertex id out of range")

        # normalise orientation to counter-clockwise
        area2 = _signed_area2(vertices, elements)
        if np.any(area2 == 0.0):
            bad = int(np.flatnonzero(area2 == 0.0)[0])
            raise MeshError(f"element {bad} is degenerate (zero area)")
        flip = area2 < 0
        if flip.any():
            elements = elements.copy()
            elements[flip] = elements[flip][:, [0, 2, 1]]

        self.vertices = vertices
        self.elements = elements
        self.vertices.setflags(write=False)
        self.elements.setflags(write=False)
        self._build_edges()

        if boundary_edges is not None:
            given = {tuple(sorted(e)) for e in np.asarray(boundary_edges, dtype=np.int64).tolist()}
            owned = {tuple(e) for e in self.edges[self.boundary_edge_ids].tolist()}
            if given != owned:
                diff = sorted(given.symmetric_difference(owned))[0]
                raise MeshError(f"boundary edge list does not match element boundary at edge {diff}")

        if check_convex:
            self._check_polygon()

    # ------------------------------------------------------------------ build
    def _build_edges(self):
        ne = len(self.elements)
        loc = self.elements[:, LOCAL_EDGES]  # (ne, 3, 2)
        key = np.sort(loc.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            bad = edges[np.flatnonzero(counts > 2)[0]]
            raise MeshError(f"non-conforming mesh: edge {tuple(bad.tolist())} shared by more than two elements")
        self.edges = edges
        self.element_edges = inverse.reshape(ne, 3)
        self.edge_count = counts
        self.boundary_edge_ids = np.flatnonzero(counts == 1)
        self.boundary_edges = edges[self.boundary_edge_ids]

        # edge -> adjacent elements
        edge_elems = -np.ones((len(edges), 2), dtype=np.int64)
        flat = self.element_edges.ravel()
        owner = np.repeat(np.arange(ne), 3)
        order = np.argsort(flat, kind="stable")
        fs, os_ = flat[order], owner[order]
        first = np.ones(len(fs), dtype=bool)
        first[1:] = fs[1:] != fs[:-1]
        edge_elems[fs[first], 0] = os_[first]
        edge_elems[fs[~first], 1] = os_[~first]
        self.edge_elements = edge_elems

        nb = -np.ones((ne, 3), dtype=np.int64)
        for k in range(3):
            pair = edge_elems[self.element_edges[:, k]]
            nb[:, k] = np.where(pair[:, 0] == np.arange(ne), pair[:, 1], pair[:, 0])
        self.element_neighbors = nb

        bv = np.zeros(len(self.vertices), dtype=bool)
        bv[self.boundary_edges.ravel()] = True
        self.boundary_vertex_mask = bv

    def _check_polygon(self):
        loop = _boundary_loop(self.boundary_edges, len(self.vertices))
        pts = self.vertices[loop]
        poly_area = 0.5 * np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
        if abs(self.areas.sum() - abs(poly_area)) > 1e-12 * max(1.0, abs(poly_area)):
            raise MeshError("elements overlap: total element area differs from polygon area")
        if poly_area < 0:
            pts = pts[::-1]
        d1 = np.roll(pts, -1, axis=0) - pts
        d0 = pts - np.roll(pts, 1, axis=0)
        cross = d0[:, 0] * d1[:, 1] - d0[:, 1] * d1[:, 0]
        scale = np.linalg.norm(d0, axis=1) * np.linalg.norm(d1, axis=1)
        if np.any(cross < -1e-12 * scale):
            raise MeshError("domain is not convex")

    # ------------------------------------------------------------ geometry
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def areas(self):
        if not hasattr(self, "_areas"):
            self._areas = 0.5 * _signed_area2(self.vertices, self.elements)
        return self._areas

    @property
    def jacobians(self):
        """(ne, 2, 2) matrices with columns p1 - p0 and p2 - p0."""
        if not hasattr(self, "_jac"):
            p = self.vertices[self.elements]
            self._jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
            self._jac_inv = np.linalg.inv(self._jac)
        return self._jac

    @property
    def jacobians_inv(self):
        self.jacobians
        return self._jac_inv

    @property
    def diameters(self):
        p = self.vertices[self.elements]
        lens = np.linalg.norm(p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]], axis=2)
        return lens.max(axis=1)

    @property
    def barycenters(self):
        return self.vertices[self.elements].mean(axis=1)

    @property
    def edge_midpoints(self):
        return self.vertices[self.edges].mean(axis=1)

    @property
    def h_max(self):
        return float(self.diameters.max())

    def affine_map(self, e):
        return AffineMap(self.jacobians[e].copy(), self.vertices[self.elements[e, 0]].copy())

    def map_points(self, ref_points):
        """Physical coordinates (ne, nq, 2) of reference points (nq, 2) on every element."""
        ref_points = np.atleast_2d(ref_points)
        p0 = self.vertices[self.elements[:, 0]]
        return p0[:, None, :] + np.einsum("eij,qj->eqi", self.jacobians, ref_points)

    def vertex_elements(self):
        """CSR-like (offsets, ids) listing the elements around every vertex."""
        if not hasattr(self, "_v2e"):
            flat = self.elements.ravel()
            owner = np.repeat(np.arange(self.n_elements), 3)
            order = np.argsort(flat, kind="stable")
            offsets = np.zeros(self.n_vertices + 1, dtype=np.int64)
            np.add.at(offsets, flat + 1, 1)
            self._v2e = (np.cumsum(offsets), owner[order])
        return self._v2e

    def __repr__(self):
        return f"Mesh(nv={self.n_vertices}, ne={self.n_elements}, h_max={self.h_max:.4g})"


def _signed_area2(vertices, elements):
    p = vertices[elements]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    return a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]


def _boundary_loop(bedges, nv):
    nxt = {}
    for a, b in bedges.tolist():
        nxt.setdefault(a, []).append(b)
        nxt.setdefault(b, []).append(a)
    if any(len(v) != 2 for v in nxt.values()):
        raise MeshError("boundary is not a single closed curve")
    start = int(bedges[0, 0])
    loop = [start]
    prev, cur = None, start
    while True:
        a, b = nxt[cur]
        step = b if a == prev else a
        if step == start:
            break
        loop.append(step)
        prev, cur = cur, step
        if len(loop) > len(nxt):
            raise MeshError("boundary loop does not close")
    if len(loop) != len(nxt):
        raise MeshError("boundary consists of several closed curves")
    return np.array(loop)


# ---------------------------------------------------------------- file i/o
def load_mesh(path) -> Mesh:
    """Read the plain-text mesh format.

    First data line holds ``V E B``; then V lines ``x y``, E lines ``i j k``
    and B lines ``i j`` (0-based ids). ``#`` starts a comment.
    """
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                rows.append((lineno, text.split()))
    if not rows:
        raise MeshError(f"{path}: empty mesh file")

    def ints(lineno, toks, n):
        if len(toks) != n:
            raise MeshError(f"{path}:{lineno}: expected {n} integers, got {len(toks)} fields")
        try:
            return [int(t) for t in toks]
        except ValueError:
            raise MeshError(f"{path}:{lineno}: could not parse integers from {' '.join(toks)!r}") from None

    lineno, toks = rows[0]
    nv, ne, nb = ints(lineno, toks, 3)
    if len(rows) != 1 + nv + ne + nb:
        raise MeshError(f"{path}:{rows[-1][0]}: expected {nv + ne + nb} data lines after header, found {len(rows) - 1}")
    verts = []
    for lineno, toks in rows[1:1 + nv]:
        if len(toks) != 2:
            raise MeshError(f"{path}:{lineno}: expected 'x y'")
        try:
            verts.append([float(t) for t in toks])
        except ValueError:
            raise MeshError(f"{path}:{lineno}: could not parse coordinates") from None
    elems = [ints(ln, t, 3) for ln, t in rows[1 + nv:1 + nv + ne]]
    bnd = [ints(ln, t, 2) for ln, t in rows[1 + nv + ne:]]
    return Mesh(np.array(verts), np.array(elems), np.array(bnd, dtype=np.int64).reshape(-1, 2))


def save_mesh(mesh: Mesh, path):
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_elements} {len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.elements:
            fh.write(f"{i} {j} {k}\n")
        for i, j in mesh.boundary_edges:
            fh.write(f"{i} {j}\n")


# -------------------------------------------------------------- generators
def unit_square(n=1, pattern="diagonal") -> Mesh:
    """Structured n x n triangulation of the unit square.

    ``diagonal`` splits each cell along one diagonal; ``crisscross`` adds the
    cell centre and four triangles per cell.
    """
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    vid = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    tris = []
    if pattern == "diagonal":
        for j in range(n):
            for i in range(n):
                a, b, c, d = vid[j, i], vid[j, i + 1], vid[j + 1, i + 1], vid[j + 1, i]
                tris += [[a, b, c], [a, c, d]]
    elif pattern == "crisscross":
        centers = []
        for j in range(n):
            for i in range(n):
                m = len(verts) + len(centers)
                centers.append([(xs[i] + xs[i + 1]) / 2, (xs[j] + xs[j + 1]) / 2])
                a, b, c, d = vid[j, i], vid[j, i + 1], vid[j + 1, i + 1], vid[j + 1, i]
                tris += [[a, b, m], [b, c, m], [c, d, m], [d, a, m]]
        verts = np.vstack([verts, centers])
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    return Mesh(verts, np.array(tris))


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: split every triangle into four similar children."""
    nv = mesh.n_vertices
    new_verts = np.vstack([mesh.vertices, mesh.edge_midpoints])
    v = mesh.elements
    m = nv + mesh.element_edges  # midpoints of (v0v1), (v1v2), (v2v0)
    children = np.concatenate([
        np.column_stack([v[:, 0], m[:, 0], m[:, 2]]),
        np.column_stack([m[:, 0], v[:, 1], m[:, 1]]),
        np.column_stack([m[:, 2], m[:, 1], v[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    # children of element e are at e, e+ne, e+2ne, e+3ne
    fine = Mesh(new_verts, children, check_convex=False)
    fine.parent = np.tile(np.arange(mesh.n_elements), 4)
    return fine


def shape_regularity(mesh: Mesh) -> float:
    """max over elements of diam(E) / inradius(E)."""
    p = mesh.vertices[mesh.elements]
    lens = np.linalg.norm(p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]], axis=2)
    area = np.abs(mesh.areas)
    if np.any(area <= 0):
        raise MeshError("degenerate element in shape_regularity")
    inradius = 2.0 * area / lens.sum(axis=1)
    return float(np.max(lens.max(axis=1) / inradius))


def patches(mesh: Mesh) -> dict:
    """Element patches S_E: every element sharing at least one vertex with E."""
    offsets, ids = mesh.vertex_elements()
    out = {}
    for e, tri in enumerate(mesh.elements):
        members = set()
        for v in tri:
            members.update(ids[offsets[v]:offsets[v + 1]].tolist())
        out[e] = Patch(e, frozenset(members))
    return out


def patch_matrix(mesh: Mesh):
    """Sparse boolean (ne, ne) matrix whose row E marks the members of S_E."""
    from scipy import sparse

    ne, nv = mesh.n_elements, mesh.n_vertices
    inc = sparse.csr_matrix(
        (np.ones(3 * ne), (np.repeat(np.arange(ne), 3), mesh.elements.ravel())), shape=(ne, nv))
    adj = (inc @ inc.T).tocsr()
    adj.data[:] = 1.0
    return adj


def patch_areas(mesh: Mesh):
    return patch_matrix(mesh) @ mesh.areas
