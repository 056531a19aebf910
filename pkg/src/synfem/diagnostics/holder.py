"""Hoelder-norm monitor for the concentration (vertex-pair quotients)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fespace import FEFunction


@dataclass
class HolderReport:
    alpha: float
    quotients: list = field(default_factory=list)   # seminorm quotient per refinement
    sup_norms: list = field(default_factory=list)

    @property
    def norms(self):
        return [q + s for q, s in zip(self.quotients, self.sup_norms)]

    @property
    def variation(self):
        q = np.asarray(self.quotients, dtype=float)
        return float(q.max() / q.min() - 1.0) if len(q) and q.min() > 0 else float("nan")


def _vertex_values(C: FEFunction):
    s = C.space
    mesh = s.mesh
    vals = np.zeros(mesh.n_vertices)
    vals[mesh.elements] = C.values_at(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    return mesh.vertices, vals


def holder_quotient(C: FEFunction, alpha: float, max_points=3000, seed=0, chunk=512, interior=False) -> float:
    """max over vertex pairs x != y of |C(x) - C(y)| / |x - y|^alpha.

    Meshes with more than ``max_points`` vertices are subsampled (fixed seed).
    ``interior`` drops boundary vertices, where the Dirichlet data often
    attains the maximum.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    X, c = _vertex_values(C)
    if interior:
        keep = ~C.space.mesh.boundary_vertex_mask
        X, c = X[keep], c[keep]
    if len(c) > max_points:
        idx = np.sort(np.random.default_rng(seed).choice(len(c), max_points, replace=False))
        X, c = X[idx], c[idx]
    best = 0.0
    for s in range(0, len(c), chunk):
        d = np.linalg.norm(X[s:s + chunk, None, :] - X[None, :, :], axis=2)
        dc = np.abs(c[s:s + chunk, None] - c[None, :])
        ok = d > 0
        if ok.any():
            best = max(best, float(np.max(dc[ok] / d[ok] ** alpha)))
    return best


def holder_norm(C: FEFunction, alpha: float, **kw) -> float:
    """||C||_inf + the vertex-pair quotient."""
    return float(np.abs(_vertex_values(C)[1]).max()) + holder_quotient(C, alpha, **kw)


def holder_report(states, alpha: float) -> HolderReport:
    rep = HolderReport(alpha)
    for C in states:
        rep.quotients.append(holder_quotient(C, alpha))
        rep.sup_norms.append(float(np.abs(_vertex_values(C)[1]).max()))
    return rep
