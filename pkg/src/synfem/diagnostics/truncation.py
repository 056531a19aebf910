"""Lipschitz truncation of velocity fields and the lambda-level selection.

The bad set is the union of elements whose barycentric maximal value exceeds
lambda. Nodes all of whose elements are bad get the McShane inf-convolution

    V_lambda(x) = min_y  V(y) + A lambda |x - y|      (componentwise)

over the good nodes y (boundary nodes count as good: V vanishes outside the
domain). The result is re-interpolated into the velocity space, so it agrees
with V coefficientwise on every good element.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..fespace import FEFunction
from ..mesh import patch_matrix
from ..projections import project_div
from ..quadrature import triangle_rule
from ..varexp import ExponentField, _pow
from .maximal import maximal_function

log = logging.getLogger(__name__)
RULE = triangle_rule(6)
_SAMPLE = np.vstack([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], RULE.points])


@dataclass
class TruncationReport:
    lam: float
    bad: np.ndarray            # element mask, M > lambda
    inflated: np.ndarray       # elements of patches touching the bad set
    A: float                   # McShane slope factor
    kappa: float               # largest kappa with inflated set inside {M > kappa lambda}
    equality_ok: bool          # V_lambda == V on good elements
    sup_ratio: float           # ||grad V_lambda||_inf / lambda
    changed: np.ndarray = None   # element mask {V_lambda != V}
    smallness: float | None = None
    extra: dict = field(default_factory=dict)


def _sup_grad(V: FEFunction):
    s = V.space
    mesh = s.mesh
    ref = s.family.grads(_SAMPLE)
    dphi = np.einsum("eji,qaj->eqai", mesh.jacobians_inv, ref)
    loc = V.coeffs[s.cell_dofs].reshape(mesh.n_elements, s.ncomp, -1)
    g = np.einsum("eca,eqai->eqci", loc, dphi)
    return float(np.sqrt(np.sum(g ** 2, axis=(2, 3))).max()) if g.size else 0.0


def _mcshane(values, X, good, bad_nodes, slope, chunk=512):
    """min over good nodes y of values[y] + slope |x - y| at the bad nodes."""
    out = np.empty((len(bad_nodes), values.shape[1]))
    Y = X[good]
    vy = values[good]
    for s in range(0, len(bad_nodes), chunk):
        d = np.linalg.norm(X[bad_nodes[s:s + chunk], None, :] - Y[None, :, :], axis=2)
        for c in range(values.shape[1]):
            out[s:s + chunk, c] = np.min(vy[None, :, c] + slope * d, axis=1)
    return out


def lipschitz_truncate(V: FEFunction, lam: float, M=None, A0=2.0, max_doublings=20):
    """Return (V_lambda, TruncationReport)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    s = V.space
    mesh = s.mesh
    M = maximal_function(V) if M is None else M
    bad = M > lam
    inflated = (patch_matrix(mesh) @ bad.astype(float)) > 0
    kappa = min(1.0, float(M[inflated].min() / lam)) if inflated.any() else 1.0
    if not bad.any():
        rep = TruncationReport(lam, bad, inflated, A0, kappa, True, _sup_grad(V) / lam,
                               np.zeros(mesh.n_elements, dtype=bool))
        return V.copy(), rep
    if bad.all():
        log.warning("good set is empty (lambda=%g below min M); returning zero", lam)
        Z = FEFunction(s)
        rep = TruncationReport(lam, bad, inflated, A0, kappa, True, 0.0, np.ones(mesh.n_elements, dtype=bool))
        return Z, rep

    n = s.n_nodes
    good = np.zeros(n, dtype=bool)
    good[s.cell_nodes[~bad].ravel()] = True
    good[s.boundary_nodes] = True
    bad_nodes = np.flatnonzero(~good)
    vals = V.coeffs.reshape(s.ncomp, n).T.copy()
    X = s.node_coords

    # A is doubled until the inf-convolution reproduces V on the good nodes,
    # i.e. V restricted to the good set is (A lambda)-Lipschitz there.
    A = A0
    good_idx = np.flatnonzero(good)
    for _ in range(max_doublings):
        repro = _mcshane(vals, X, good, good_idx, A * lam)
        if np.allclose(repro, vals[good_idx], rtol=0, atol=1e-12 * max(1.0, np.abs(vals).max())):
            break
        A *= 2
    new = vals.copy()
    if len(bad_nodes):
        new[bad_nodes] = _mcshane(vals, X, good, bad_nodes, A * lam)
    W = FEFunction(s, new.T.ravel())
    diff = np.any(np.abs(W.coeffs[s.cell_dofs] - V.coeffs[s.cell_dofs]) > 0, axis=1)
    equal = bool(np.all(W.coeffs[s.cell_dofs[~bad]] == V.coeffs[s.cell_dofs[~bad]]))
    rep = TruncationReport(lam, bad, inflated, A, kappa, equal, _sup_grad(W) / lam, diff)
    return W, rep


def discrete_lipschitz_truncate(V: FEFunction, lam: float, Q, M=None):
    """V^n_lambda = Pi_div(V_lambda); returns (V^n_lambda, report)."""
    W, rep = lipschitz_truncate(V, lam, M)
    Wn = project_div(W, V.space, Q, check=False)
    s = V.space
    rep.changed = np.any(np.abs(Wn.coeffs[s.cell_dofs] - V.coeffs[s.cell_dofs]) > 1e-12 *
                         max(1.0, np.abs(V.coeffs).max()), axis=1)
    rep.extra["contained_in_inflated"] = bool(np.all(~rep.changed | rep.inflated))
    return Wn, rep


# ------------------------------------------------------------ lambda levels
def level_bounds(j: int):
    """Exact integer bounds [(2^j)^(2^j), (2^(j+1))^(2^(j+1)))."""
    return (2 ** j) ** (2 ** j), (2 ** (j + 1)) ** (2 ** (j + 1))


def _max_modular_parts(M, r: ExponentField, mesh):
    rq = r.sample(mesh, RULE.points)
    w = np.abs(np.linalg.det(mesh.jacobians))[:, None] * RULE.weights
    return np.sum(w * _pow(np.repeat(M[:, None], len(RULE), axis=1), rq), axis=1)   # per element


def select_lambda(V: FEFunction, r: ExponentField, j: int, kappa=0.5, M=None):
    """Pigeonhole choice of lambda = (2^j)^i* among the layers kappa theta^i < M <= kappa theta^(i+1).

    Returns (lambda, info) where lambda is an int within the level bounds.
    """
    if j < 1:
        raise ValueError("level j must be >= 1")
    mesh = V.space.mesh
    M = maximal_function(V) if M is None else M
    per_elem = _max_modular_parts(M, r, mesh)
    total = float(per_elem.sum())
    layers = []
    for i in range(2 ** j, 2 ** (j + 1)):
        lo, hi = kappa * float((2 ** j) ** i), kappa * float((2 ** j) ** (i + 1))
        mask = (M > lo) & (M <= hi)
        layers.append((i, float(per_elem[mask].sum())))
    for i, val in layers:
        if val <= total / 2 ** j:
            lam = (2 ** j) ** i
            break
    else:   # cannot happen: disjoint layers, pigeonhole
        lam = level_bounds(j)[0]
    return lam, {"total": total, "layers": layers, "kappa": kappa}


def truncation_smallness(V: FEFunction, r: ExponentField, Q, js=(1, 2, 3), kappa=0.5, rounds=5):
    """Difference-set modulars int_{V_j != V} |grad V_j|^r for each level j.

    kappa is lowered to the measured containment witness until the inflated set
    lies inside {M > kappa lambda_j} for every j. The a-priori bound is
    C / 2^j with C = 2 max(1, C_d / kappa)^{r+} int M^r, C_d the largest
    measured ||grad V_j||_inf / lambda_j.
    """
    mesh = V.space.mesh
    M = maximal_function(V)
    for _ in range(rounds):
        rows = []
        kap_meas = 1.0
        for j in js:
            lam, info = select_lambda(V, r, j, kappa, M)
            Vj, rep = discrete_lipschitz_truncate(V, lam, Q, M)
            kap_meas = min(kap_meas, rep.kappa)
            rq = r.sample(mesh, RULE.points)
            g = Vj.grads(RULE)
            mag = np.sqrt(np.sum(g ** 2, axis=(2, 3)))
            w = np.abs(np.linalg.det(mesh.jacobians))[:, None] * RULE.weights
            lhs = float(np.sum((w * _pow(mag, rq))[rep.changed]))
            rows.append({"j": j, "lambda": lam, "lhs": lhs, "sup_ratio": rep.sup_ratio, "kappa": rep.kappa,
                         "total": info["total"], "contained": rep.extra["contained_in_inflated"]})
        if kap_meas >= kappa:
            break
        kappa = 0.999 * kap_meas
    Cd = max(rw["sup_ratio"] for rw in rows)
    total = rows[0]["total"]
    C = 2.0 * max(1.0, Cd / kappa) ** r.r_plus * total
    for rw in rows:
        rw["bound"] = C / 2 ** rw["j"]
        rw["ok"] = rw["lhs"] <= rw["bound"]
    return {"kappa": kappa, "C": C, "C_d": Cd, "rows": rows}
