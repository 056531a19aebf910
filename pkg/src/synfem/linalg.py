"""Sparse storage and the linear/eigen solvers used by assembly and diagnostics.

Matrices are plain :class:`scipy.sparse.csr_matrix` objects; assembly goes
through :class:`TripletBuffer`, which sums duplicate entries on finalize.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse import linalg as spla


class LinearSolverError(RuntimeError):
    pass


class EigenSolverError(RuntimeError):
    pass


@dataclass
class LinearSolveReport:
    iterations: int
    residual_norm: float
    converged: bool


class TripletBuffer:
    """Coordinate-format accumulator; element loops append unordered blocks."""

    def __init__(self, shape):
        self.shape = tuple(shape)
        self._rows, self._cols, self._vals = [], [], []

    def add(self, rows, cols, values):
        """Add a dense block ``values[..., i, j]`` at (rows[..., i], cols[..., j])."""
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        values = np.asarray(values, dtype=float)
        r = np.broadcast_to(rows[..., :, None], values.shape)
        c = np.broadcast_to(cols[..., None, :], values.shape)
        self._rows.append(r.ravel())
        self._cols.append(c.ravel())
        self._vals.append(values.ravel())

    def add_entries(self, rows, cols, values):
        self._rows.append(np.ravel(rows))
        self._cols.append(np.ravel(cols))
        self._vals.append(np.ravel(np.asarray(values, dtype=float)))

    def merge(self, other: "TripletBuffer"):
        if other.shape != self.shape:
            raise ValueError("shape mismatch")
        self._rows += other._rows
        self._cols += other._cols
        self._vals += other._vals

    def finalize(self) -> sparse.csr_matrix:
        if self._rows:
            r = np.concatenate(self._rows)
            c = np.concatenate(self._cols)
            v = np.concatenate(self._vals)
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        A = sparse.coo_matrix((v, (r, c)), shape=self.shape).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return A


def _as_csc(A):
    if sparse.issparse(A):
        return A.tocsc()
    return sparse.csc_matrix(np.asarray(A, dtype=float))


def _empty_row(A):
    A = sparse.csr_matrix(A)
    nnz = np.diff(A.indptr)
    empty = np.flatnonzero(nnz == 0)
    if len(empty):
        return int(empty[0])
    rowmax = abs(A).max(axis=1).toarray().ravel()
    zero = np.flatnonzero(rowmax == 0)
    return int(zero[0]) if len(zero) else None


def nested_dissection(A, coords, leaf=64, late=None, last=None):
    """Geometric nested-dissection ordering of the graph of ``A``.

    Index sets are split at the coordinate median along their longer extent;
    vertices of the left half adjacent to the right half form the separator
    and are ordered after both halves. ``late`` marks DOFs placed after the
    others inside each leaf/separator (pressures of a saddle-point system, so
    that their zero diagonal is eliminated late); ``last`` lists indices
    appended at the very end (dense rows such as a mean-value multiplier).
    """
    A = sparse.csr_matrix(A)
    n = A.shape[0]
    coords = np.asarray(coords, dtype=float)
    late = np.zeros(n, dtype=bool) if late is None else np.asarray(late, dtype=bool)
    last = np.zeros(0, dtype=np.int64) if last is None else np.asarray(last, dtype=np.int64)
    G = (abs(A) + abs(A.T)).tocsr()
    rest = np.setdiff1d(np.arange(n), last)
    order = []

    def tail(idx):
        return idx[np.argsort(late[idx], kind="stable")]

    stack = [(rest, 0)]
    # iterative post-order: (idx, 0) = split, (idx, 1) = emit
    while stack:
        idx, emit = stack.pop()
        if emit:
            order.append(tail(idx))
            continue
        if len(idx) <= leaf:
            order.append(tail(idx))
            continue
        c = coords[idx]
        ax = int(np.argmax(c.max(0) - c.min(0)))
        left = c[:, ax] < np.median(c[:, ax])
        if left.all() or not left.any():
            order.append(tail(idx))
            continue
        L, R = idx[left], idx[~left]
        inR = np.zeros(n, dtype=bool)
        inR[R] = True
        sub = G[L]
        hits = np.add.reduceat(inR[sub.indices].astype(np.int64), sub.indptr[:-1]) if sub.nnz else np.zeros(len(L))
        hits[np.diff(sub.indptr) == 0] = 0
        sep = hits > 0
        stack += [(L[sep], 1), (R, 0), (L[~sep], 0)]
    return np.concatenate(order + [last])


def factorize(A, ordering=None, pivot_thresh=1.0):
    """Sparse LU factorization; returns a callable ``solve(b)``.

    With ``ordering`` (a permutation, e.g. from :func:`nested_dissection`) the
    matrix is symmetrically permuted and factorized without further column
    reordering; a small ``pivot_thresh`` then keeps the fill close to that of
    the ordering. One step of iterative refinement is applied per solve.
    """
    A = _as_csc(A)
    if A.shape[0] != A.shape[1]:
        raise LinearSolverError(f"matrix is not square: {A.shape}")
    row = _empty_row(A)
    if row is not None:
        raise LinearSolverError(f"singular matrix: row {row} is zero")
    perm = None if ordering is None else np.asarray(ordering)
    Ap = A if perm is None else A[perm][:, perm].tocsc()
    try:
        if perm is None:
            lu = spla.splu(Ap, diag_pivot_thresh=pivot_thresh)
        else:
            lu = spla.splu(Ap, permc_spec="NATURAL", diag_pivot_thresh=pivot_thresh)
    except RuntimeError as exc:
        raise LinearSolverError(f"singular pivot during LU factorization ({exc})") from None
    udiag = np.abs(lu.U.diagonal())
    if udiag.min() <= 1e-14 * udiag.max():
        k = int(np.argmin(udiag))
        row = int(np.flatnonzero(lu.perm_r == k)[0])
        if perm is not None:
            row = int(perm[row])
        raise LinearSolverError(f"singular pivot at row {row}")
    if perm is None:
        return lu.solve
    Ar = A.tocsr()

    def solve(b):
        b = np.asarray(b, dtype=float)
        x = np.empty_like(b)
        x[perm] = lu.solve(b[perm])
        r = b - Ar @ x
        dx = np.empty_like(b)
        dx[perm] = lu.solve(r[perm])
        return x + dx
    return solve


def solve_direct(A, b, ordering=None, pivot_thresh=1.0):
    """Solve A x = b by sparse LU."""
    b = np.asarray(b, dtype=float)
    x = factorize(A, ordering, pivot_thresh)(b)
    if not np.all(np.isfinite(x)):
        raise LinearSolverError("non-finite solution")
    return x


def solve_iterative(A, b, tol=1e-10, maxiter=None, restart=50, symmetric=None):
    """Krylov solve: CG for symmetric positive matrices, restarted GMRES otherwise.

    Never raises on non-convergence; the report says whether the relative
    residual reached ``tol``.
    """
    A = sparse.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if symmetric is None:
        symmetric = abs(A - A.T).max() <= 1e-14 * max(abs(A).max(), 1.0) if n else True
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), LinearSolveReport(0, 0.0, True)
    maxiter = maxiter or 10 * n
    count = [0]

    def cb(_):
        count[0] += 1

    d = A.diagonal()
    M = None
    if np.all(d > 0):
        M = sparse.diags(1.0 / d)
    with np.errstate(all="ignore"):   # breakdown on singular A shows up in the residual
        if symmetric:
            x, _ = spla.cg(A, b, rtol=tol, maxiter=maxiter, M=M, callback=cb)
        else:
            x, _ = spla.gmres(A, b, rtol=tol, restart=restart, maxiter=max(1, maxiter // restart),
                              M=M, callback=cb, callback_type="pr_norm")
    res = float(np.linalg.norm(A @ x - b))
    ok = bool(np.isfinite(res) and res <= tol * bnorm)
    return x, LinearSolveReport(max(count[0], 1), res, ok)


def smallest_generalized_eig(A, M, shift=None, nvec=6, tol=1e-12, maxiter=500, return_vector=False):
    """Smallest eigenvalue of A x = lam M x by shifted block inverse iteration.

    A symmetric positive semidefinite, M symmetric positive definite. A block
    of ``nvec`` vectors is iterated with Rayleigh-Ritz so clustered low
    eigenvalues do not stall convergence.
    """
    dense = not (sparse.issparse(A) or sparse.issparse(M))
    n = A.shape[0]
    if A.shape != M.shape or A.shape[0] != A.shape[1]:
        raise ValueError("A and M must be square and of equal size")
    if n <= 2 * nvec + 2:
        Ad = A.toarray() if sparse.issparse(A) else np.asarray(A, dtype=float)
        Md = M.toarray() if sparse.issparse(M) else np.asarray(M, dtype=float)
        w, V = sla.eigh(Ad, Md)
        return (w[0], V[:, 0]) if return_vector else float(w[0])

    if shift is None:
        # A is PSD: a small negative shift keeps A - shift*M positive definite
        mscale = abs(M.diagonal()).max() if sparse.issparse(M) else abs(np.diag(M)).max()
        ascale = abs(A.diagonal()).max() if sparse.issparse(A) else abs(np.diag(A)).max()
        shift = -1e-8 * max(ascale, 1e-300) / mscale
    if dense:
        K = np.asarray(A, dtype=float) - shift * np.asarray(M, dtype=float)
        lu = sla.lu_factor(K)

        def solve(y):
            return sla.lu_solve(lu, y)
        Mop = np.asarray(M, dtype=float)
        Aop = np.asarray(A, dtype=float)
    else:
        Aop = sparse.csr_matrix(A)
        Mop = sparse.csr_matrix(M)
        solve = factorize((Aop - shift * Mop).tocsc())

    rng = np.random.default_rng(12345)
    X = rng.standard_normal((n, nvec))
    lam_old = None
    for it in range(maxiter):
        Y = solve(Mop @ X)
        # M-orthonormalise and Rayleigh-Ritz
        G = Y.T @ (Mop @ Y)
        H = Y.T @ (Aop @ Y)
        w, C = sla.eigh(0.5 * (H + H.T), 0.5 * (G + G.T))
        X = Y @ C
        lam = w[0]
        if lam_old is not None and abs(lam - lam_old) <= tol * max(abs(lam), 1e-300):
            return (float(lam), X[:, 0]) if return_vector else float(lam)
        lam_old = lam
    raise EigenSolverError(f"inverse iteration did not converge in {maxiter} steps (last {lam_old})")


def write_matrix_market(path, A, comment=""):
    from scipy.io import mmwrite

    mmwrite(str(path), sparse.coo_matrix(A), comment=comment)
