"""Discrete Bogovskii operator: a right inverse of the discrete divergence.

B^n H is the velocity of the minimal-Dirichlet-energy field V in V^n with
<div V, Q> = <H, Q> for all Q in Q^n, i.e. the velocity part of a Stokes
solve with the vector Laplacian and the moments of H as constraint data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..assembly import _assemble_local, divergence_matrix, pressure_means
from ..fespace import FEFunction, FESpace, apply_dirichlet
from ..linalg import solve_direct
from ..quadrature import triangle_rule
from ..varexp import ExponentField, QuadField, _pow, conjugate, luxemburg_norm, sample

RULE = triangle_rule(6)


@dataclass
class BogovskiiResult:
    V: FEFunction
    divergence_defect: float   # max_i |<div V - H, Q_i>|
    grad_norm: float           # ||grad V||_{r}
    dual_norm: float           # dictionary value of sup <H, Q> / ||Q||_{r'}
    ratio: float


def vector_laplacian(V: FESpace, rule=triangle_rule(4)):
    t = V.tabulate(rule)
    lap = np.einsum("eq,eqai,eqbi->eab", t.weights, t.dphi, t.dphi)
    nloc = lap.shape[1]
    loc = np.zeros((lap.shape[0], 2 * nloc, 2 * nloc))
    loc[:, :nloc, :nloc] = lap
    loc[:, nloc:, nloc:] = lap
    return _assemble_local(V, loc)


def _h_values(H, Q: FESpace, rule):
    if isinstance(H, FEFunction):
        return H.values(rule)
    X = Q.mesh.map_points(rule.points)
    return np.asarray(H(X.reshape(-1, 2)), dtype=float).reshape(X.shape[:2])


def moments(H, Q: FESpace, rule=RULE):
    """<H, Q_i> for every pressure basis function."""
    t = Q.tabulate(rule)
    loc = np.einsum("eq,qa,eq->ea", t.weights, t.phi, _h_values(H, Q, rule))
    return np.bincount(Q.cell_dofs.ravel(), loc.ravel(), minlength=Q.ndofs)


def _local_project(vals, Q: FESpace, rule):
    """Element-local L2 projection of quadrature values onto Q^n (discontinuous Q)."""
    phi = Q.family.values(rule.points)
    M = np.einsum("q,qa,qb->ab", rule.weights, phi, phi)
    rhs = np.einsum("q,qa,eq->ea", rule.weights, phi, vals)
    out = np.zeros(Q.ndofs)
    out[Q.cell_dofs] = np.linalg.solve(M, rhs.T).T
    return FEFunction(Q, out)


def dual_norm(H, Q: FESpace, r: ExponentField, rule=RULE):
    """Dictionary lower bound for sup_{Q in Q^n, ||Q||_{r'} = 1} <H, Q>.

    Dictionary: the L2 projection of H and the projection of sign(H)|H|^{r-1}
    (the exact maximizer before projection).
    """
    mesh = Q.mesh
    h = _h_values(H, Q, rule)
    rq = r.sample(mesh, rule.points)
    rc = conjugate(r)
    w = Q.tabulate(rule).weights
    best = 0.0
    cands = [h, np.sign(h) * _pow(np.abs(h), rq - 1.0)]
    if not Q.family.continuous:
        cands = [_local_project(c, Q, rule).values(rule) for c in cands]
    for q in cands:
        nq = luxemburg_norm(QuadField(mesh, np.abs(q), rule), rc)
        if nq > 0:
            best = max(best, float(np.sum(w * h * q)) / nq)
    return best


def discrete_bogovskii(H, spaces, r: ExponentField | None = None, mean_tol=1e-10) -> BogovskiiResult:
    """B^n H for H of zero mean (an FEFunction on Q^n or a callable)."""
    V, Q = spaces[0], spaces[1]
    r = r or ExponentField.constant(2.0)
    hq = moments(H, Q)
    mean = pressure_means(Q)
    scale = max(1.0, float(np.sum(np.abs(hq))))
    total = float(np.sum(hq))   # pressure bases form a partition of unity
    if abs(total) > mean_tol * scale:
        raise ValueError(f"H must have zero mean (integral {total:.3e})")
    from ..solver import _saddle, saddle_ordering

    L = vector_laplacian(V)
    B = divergence_matrix(V, Q)
    K = _saddle(L, B, mean, V)
    rhs = np.concatenate([np.zeros(V.ndofs), -hq, [0.0]])
    K, rhs = apply_dirichlet(V, K, rhs, {int(d): 0.0 for d in V.boundary_dofs})
    x = solve_direct(K, rhs, saddle_ordering(K, V, Q), pivot_thresh=1e-3)
    U = FEFunction(V, x[:V.ndofs])
    defect = float(np.abs(B @ U.coeffs - hq).max()) if Q.ndofs else 0.0
    g = luxemburg_norm(sample(U, rule=RULE, which="grad"), r)
    d = dual_norm(H, Q, r)
    return BogovskiiResult(U, defect, g, d, g / d if d > 0 else 0.0)
