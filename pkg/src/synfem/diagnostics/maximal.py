"""Discrete Hardy-Littlewood maximal function of |grad V|."""
from __future__ import annotations

import numpy as np

from ..fespace import FEFunction
from ..quadrature import triangle_rule

RULE = triangle_rule(4)


def gradient_magnitude(V: FEFunction, rule=RULE):
    """|grad V| (Frobenius) at quadrature points, weights and points."""
    t = V.space.tabulate(rule)
    g = V.grads(rule)
    mag = np.sqrt(np.sum(g.reshape(g.shape[0], g.shape[1], -1) ** 2, axis=-1))
    return mag, t.weights, t.points


def radius_ladder(mesh, h=None):
    """Dyadic radii h, 2h, 4h, ... up to the domain diameter."""
    h = mesh.h_max if h is None else h
    span = mesh.vertices.max(0) - mesh.vertices.min(0)
    diam = float(np.hypot(*span))
    radii = [h]
    while radii[-1] < diam:
        radii.append(2 * radii[-1])
    return np.array(radii)


def ball_averages(V: FEFunction, centers, radii, rule=RULE, chunk=256):
    """Averages of |grad V| (extended by zero) over balls B_rho(x): (ncenters, nradii).

    The ball integral is approximated by summing quadrature points inside the ball.
    """
    mag, w, pts = gradient_magnitude(V, rule)
    P = pts.reshape(-1, 2)
    f = (w * mag).ravel()
    keep = f != 0
    P, f = P[keep], f[keep]
    centers = np.atleast_2d(centers)
    radii = np.asarray(radii, dtype=float)
    out = np.zeros((len(centers), len(radii)))
    if not len(f):
        return out
    r2 = radii ** 2
    for s in range(0, len(centers), chunk):
        c = centers[s:s + chunk]
        d2 = (c[:, None, 0] - P[None, :, 0]) ** 2 + (c[:, None, 1] - P[None, :, 1]) ** 2
        for k, rho2 in enumerate(r2):
            out[s:s + chunk, k] = (d2 < rho2) @ f
    return out / (np.pi * radii ** 2)


def maximal_function(V: FEFunction, radii=None, rule=RULE) -> np.ndarray:
    """Per-element M(|grad V|) at barycentres: max of the element average and the ball averages."""
    mesh = V.space.mesh
    mag, w, _ = gradient_magnitude(V, rule)
    local = np.sum(w * mag, axis=1) / np.sum(w, axis=1)
    if radii is None:
        radii = radius_ladder(mesh)
    balls = ball_averages(V, mesh.barycenters, radii, rule)
    return np.maximum(local, balls.max(axis=1))
