"""Quadrature rules on the reference triangle and on edges."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray   # (nq, 2) on {x, y >= 0, x + y <= 1}
    weights: np.ndarray  # (nq,), sum 1/2
    order: int

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def triangle_rule(order: int = 6) -> QuadratureRule:
    """Collapsed Gauss-Jacobi x Gauss-Legendre rule exact for total degree ``order``.

    All weights are positive; n = ceil((order + 1) / 2) points per direction.
    """
    n = max(1, (order + 2) // 2)
    t, wj = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (1.0 + t)
    wu = wj / 4.0
    s, wl = roots_legendre(n)
    v = 0.5 * (1.0 + s)
    wv = wl / 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    w = np.outer(wu, wv).ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, order)


@lru_cache(maxsize=None)
def line_rule(order: int = 7):
    """Gauss-Legendre points/weights on [0, 1], exact for degree ``order``."""
    n = max(1, (order + 2) // 2)
    s, w = roots_legendre(n)
    return 0.5 * (1.0 + s), 0.5 * w
