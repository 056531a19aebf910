"""Manufactured solutions: exact forcing terms by symbolic differentiation (sympy)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

from ..physics import FluxParams, StressParams
from ..varexp import ScalarExponentLaw

x, y = sp.symbols("x y", real=True)
X = (x, y)


class ManufactureError(ValueError):
    pass


def parse(expr) -> sp.Expr:
    if isinstance(expr, sp.Expr):
        return expr
    return sp.sympify(expr, locals={"x": x, "y": y, "pi": sp.pi})


def curl(psi):
    """Divergence-free field (d_y psi, -d_x psi)."""
    psi = parse(psi)
    return (sp.diff(psi, y), -sp.diff(psi, x))


def symbolic_law(law: ScalarExponentLaw, c):
    if law.kind == "rational":
        return law.a + law.b * c / (1 + c)
    pts = law.points
    pieces = [(pts[0][1], c < pts[0][0])]
    for (c0, r0), (c1, r1) in zip(pts[:-1], pts[1:]):
        pieces.append((r0 + (r1 - r0) * (c - c0) / (c1 - c0), c < c1))
    pieces.append((pts[-1][1], True))
    return sp.Piecewise(*pieces)


def _lambdify(expr):
    f = sp.lambdify(X, expr, "numpy")

    def g(pts):
        pts = np.asarray(pts, dtype=float)
        return np.broadcast_to(np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float), (len(pts),)).copy()
    return g


def _vector(exprs):
    fs = [_lambdify(e) for e in exprs]
    return lambda pts: np.column_stack([f(pts) for f in fs])


@dataclass
class Manufactured:
    u: object
    grad_u: object
    p: object
    c: object
    grad_c: object
    f: object
    g: object
    exprs: dict
    exponent: object = None


def manufacture(u, p, c, stress: StressParams, flux: FluxParams, r=None, convection=True) -> Manufactured:
    """Forcing f = -div S(c, Du) + div(u (x) u) + grad p and source g = div(c u) - div(K grad c).

    ``u`` is a pair of expressions (or strings), ``p`` and ``c`` scalars.
    ``r`` overrides the exponent law with a constant.
    """
    u = tuple(parse(e) for e in u)
    p, c = parse(p), parse(c)
    div = sp.simplify(sp.diff(u[0], x) + sp.diff(u[1], y))
    if div != 0:
        raise ManufactureError(f"u is not divergence free: div u = {div}")
    grad = [[sp.diff(u[j], X[i]) for j in range(2)] for i in range(2)]   # grad[i][j] = d_i u_j
    D = [[(grad[i][j] + grad[j][i]) / 2 for j in range(2)] for i in range(2)]
    D2 = sum(D[i][j] ** 2 for i in range(2) for j in range(2))
    rexpr = sp.Float(r) if r is not None else symbolic_law(stress.law, c)
    nu = stress.nu0 * (stress.kappa1 + stress.kappa2 * D2) ** ((rexpr - 2) / 2)
    if rexpr == 2:
        nu = sp.Float(stress.nu0)
    S = [[nu * D[i][j] for j in range(2)] for i in range(2)]
    f = []
    for j in range(2):
        divS = sum(sp.diff(S[i][j], X[i]) for i in range(2))
        conv = sum(sp.diff(u[i] * u[j], X[i]) for i in range(2)) if convection else 0
        f.append(-divS + conv + sp.diff(p, X[j]))
    K = flux.k0 + (flux.k1 / (1 + sp.sqrt(D2)) if flux.k1 else 0)
    g = (sum(sp.diff(c * u[i], X[i]) for i in range(2)) if convection else 0) \
        - sum(sp.diff(K * sp.diff(c, X[i]), X[i]) for i in range(2))
    grad_u = [_lambdify(grad[i][j]) for i in range(2) for j in range(2)]

    def grad_u_fn(pts):
        # [.., j, i] = d_i u_j, matching FEFunction.grads
        v = np.stack([gf(pts) for gf in grad_u], axis=-1).reshape(-1, 2, 2)
        return np.swapaxes(v, 1, 2)

    return Manufactured(
        u=_vector(u), grad_u=grad_u_fn, p=_lambdify(p), c=_lambdify(c),
        grad_c=_vector([sp.diff(c, x), sp.diff(c, y)]), f=_vector(f), g=_lambdify(g),
        exprs={"u": u, "p": p, "c": c, "f": tuple(f), "g": g}, exponent=rexpr)


STREAM = "x**2*(1-x)**2*y**2*(1-y)**2"
