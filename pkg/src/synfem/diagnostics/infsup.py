"""Discrete inf-sup constant of a velocity/pressure pairing.

beta = inf_Q sup_V <div V, Q> / (||grad V|| ||Q||) over zero-mean Q in Q^n.
For r = 2 this is sqrt of the smallest eigenvalue of S p = mu M p with
S = B A^-1 B^T (A the vector Laplacian, M the pressure mass) on the
zero-mean subspace. For a variable exponent no eigenproblem exists and a
dictionary of pressure modes gives an estimate from Luxemburg-norm quotients.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.sparse import linalg as spla

from ..assembly import divergence_matrix, pressure_means
from ..fespace import FEFunction, apply_dirichlet
from ..linalg import EigenSolverError, factorize
from ..varexp import ExponentField, conjugate, luxemburg_norm, sample
from .bogovskii import RULE, vector_laplacian

log = logging.getLogger(__name__)
UNSTABLE = 1e-10
DENSE_LIMIT = 400


@dataclass
class InfSupReport:
    pairing: str
    betas: list = field(default_factory=list)
    exponent: str = "constant 2.0"
    h: list = field(default_factory=list)
    flagged: bool = False

    @property
    def ratio(self):
        b = np.asarray(self.betas, dtype=float)
        return float(b.min() / b.max()) if len(b) else float("nan")


class _Schur:
    """Operators for the pressure Schur complement restricted to zero mean."""

    def __init__(self, spaces):
        V, Q = spaces[0], spaces[1]
        self.V, self.Q = V, Q
        self.A = vector_laplacian(V)
        self.B = divergence_matrix(V, Q)
        self.M = Q.mass_matrix().tocsr()
        self.m = pressure_means(Q)
        self.free = V.free_dofs
        Af = self.A[self.free][:, self.free].tocsc()
        self._Ainv = factorize(Af)
        self.Bf = self.B[:, self.free].tocsr()
        self._K = None

    def velocity(self, p):
        """Riesz representative A^-1 B^T p (zero boundary values)."""
        u = np.zeros(self.V.ndofs)
        u[self.free] = self._Ainv(self.Bf.T @ p)
        return u

    def apply(self, p):
        return self.Bf @ self._Ainv(self.Bf.T @ p)

    def solve_zero_mean(self, b):
        """p with S p = b and m.p = 0 (b must satisfy 1.b = 0)."""
        if self._K is None:
            from ..solver import _saddle, saddle_ordering
            K = _saddle(self.A, self.B, self.m, self.V)
            K, _ = apply_dirichlet(self.V, K, np.zeros(K.shape[0]), {int(d): 0.0 for d in self.V.boundary_dofs})
            self._K = factorize(K, saddle_ordering(K, self.V, self.Q), pivot_thresh=1e-3)
        nv = self.V.ndofs
        rhs = np.concatenate([np.zeros(nv), -b, [0.0]])
        return self._K(rhs)[nv:nv + len(b)]


def _eig_dense(S: _Schur, k):
    nq = S.Q.ndofs
    Sd = np.column_stack([S.apply(e) for e in np.eye(nq)])
    Md = S.M.toarray()
    Zb = sla.null_space(S.m[None, :])
    w, X = sla.eigh(Zb.T @ (0.5 * (Sd + Sd.T)) @ Zb, Zb.T @ Md @ Zb)
    return np.maximum(w[:k], 0.0), Zb @ X[:, :k]


def _eig_sparse(S: _Schur, k):
    nq = S.Q.ndofs
    ones = np.ones(nq)
    m = S.m
    area = float(m @ ones)
    alpha = 10.0 / area   # lifts the constant mode to eigenvalue 10, above the div-bound 2

    def lifted(x):
        return S.apply(x) + alpha * m * (m @ x)

    def lifted_inv(b):
        gam = float(ones @ b) / float(ones @ m)
        p0 = S.solve_zero_mean(b - gam * m)
        return p0 + gam / (alpha * float(m @ ones)) * ones

    L = spla.LinearOperator((nq, nq), matvec=lifted, dtype=float)
    Linv = spla.LinearOperator((nq, nq), matvec=lifted_inv, dtype=float)
    try:
        w, X = spla.eigsh(L, k=k, M=S.M, sigma=0.0, OPinv=Linv, which="LM", tol=1e-12,
                          v0=np.random.default_rng(0).standard_normal(nq))
    except spla.ArpackNoConvergence as exc:
        raise EigenSolverError(str(exc)) from None
    order = np.argsort(w)
    return np.maximum(w[order], 0.0), X[:, order]


def pressure_modes(spaces, k=4):
    """The k lowest zero-mean Schur modes (eigenvalues, M-normalized vectors)."""
    S = _Schur(spaces)
    k = min(k, S.Q.ndofs - 1)
    return (_eig_dense(S, k) if S.Q.ndofs <= DENSE_LIMIT else _eig_sparse(S, k)), S


def _as_field(r):
    if r is None:
        return ExponentField.constant(2.0)
    if isinstance(r, ExponentField):
        return r
    return ExponentField.constant(float(r))


def dictionary_bound(spaces, r, n_random=8, seed=0, k=4):
    """min over a pressure dictionary of <div V_Q, Q> / (||grad V_Q||_r ||Q||_{r'}), V_Q = A^-1 B^T Q.

    The dictionary holds the lowest r = 2 Schur modes and seeded random
    zero-mean pressures; with r = 2 the first mode reproduces the eigenvalue beta.
    """
    r = _as_field(r)
    (w, X), S = pressure_modes(spaces, k)
    Q = S.Q
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((Q.ndofs, n_random))
    R -= np.outer(np.ones(Q.ndofs), S.m @ R) / S.m.sum()
    rc = conjugate(r)
    best = np.inf
    for q in np.column_stack([X, R]).T:
        u = S.velocity(q)
        num = float(q @ (S.B @ u))
        U = FEFunction(S.V, u)
        den = luxemburg_norm(sample(U, rule=RULE, which="grad"), r) * luxemburg_norm(sample(FEFunction(Q, q), rule=RULE), rc)
        if den > 0:
            best = min(best, num / den)
    return float(best)


def infsup_constant(spaces, r=None) -> float:
    """Discrete inf-sup constant; +inf when the zero-mean pressure space is trivial."""
    V, Q = spaces[0], spaces[1]
    if Q.ndofs <= 1:
        return float("inf")
    r = _as_field(r)
    if V.dim == 0:
        beta = 0.0
    elif r.is_constant and r.r_minus == 2.0:
        (w, _), _ = pressure_modes(spaces, 1)
        beta = float(np.sqrt(w[0]))
    else:
        beta = dictionary_bound(spaces, r)
    if beta < UNSTABLE:
        log.warning("pairing %s looks unstable: beta = %.3e", getattr(V, "pairing", "?"), beta)
    return beta


def infsup_sweep(meshes, pairing, r_factory=None) -> InfSupReport:
    """beta on each mesh; ``r_factory(mesh)`` may supply a per-mesh exponent."""
    from ..fespace import build_spaces

    rep = InfSupReport(pairing)
    for mesh in meshes:
        spaces = build_spaces(mesh, pairing)
        r = r_factory(mesh) if r_factory else None
        rep.betas.append(infsup_constant(spaces, r))
        rep.h.append(mesh.h_max)
        if r is not None:
            rep.exponent = repr(r)
    rep.flagged = bool(np.min(rep.betas) < UNSTABLE)
    return rep
