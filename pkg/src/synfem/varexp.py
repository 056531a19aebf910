"""Variable-exponent Lebesgue machinery.

Everything is evaluated on element quadrature points, using the same rule as
the finite element assembly so norms and residuals agree. A field to be
measured is either an :class:`~synfem.fespace.FEFunction` (its pointwise
Euclidean magnitude is used), a :class:`QuadField` of sampled magnitudes, or
a callable ``g(x)`` together with a mesh.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fespace import FEFunction
from .mesh import Mesh
from .quadrature import triangle_rule

DEFAULT_RULE = triangle_rule(6)


class ExponentError(ValueError):
    pass


# ------------------------------------------------------------ exponent laws
@dataclass(frozen=True)
class ScalarExponentLaw:
    """Concentration-to-exponent map r(c).

    ``rational``: r(c) = a + b c / (1 + c), defined for c > -1.
    ``table``: monotone piecewise-linear interpolation of (c, r) points,
    constant beyond the end points.
    """

    kind: str = "rational"
    a: float = 1.6
    b: float = 0.3
    points: tuple = ()

    def __post_init__(self):
        if self.kind == "rational":
            if not self.a > 1.0 or self.b < 0.0:
                raise ExponentError(f"rational law needs a > 1 and b >= 0, got a={self.a}, b={self.b}")
        elif self.kind == "table":
            pts = np.asarray(self.points, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
                raise ExponentError("table law needs at least two [c, r] points")
            if np.any(np.diff(pts[:, 0]) <= 0):
                raise ExponentError("table law: concentrations must be strictly increasing")
            d = np.diff(pts[:, 1])
            if not (np.all(d >= 0) or np.all(d <= 0)):
                raise ExponentError("table law: exponent values must be monotone")
            if pts[:, 1].min() <= 1.0:
                raise ExponentError("table law: exponent values must exceed 1")
        else:
            raise ExponentError(f"unknown exponent law {self.kind!r}")

    @classmethod
    def from_config(cls, cfg: dict) -> "ScalarExponentLaw":
        kind = cfg.get("type", "rational")
        if kind == "rational":
            return cls("rational", float(cfg.get("a", 1.6)), float(cfg.get("b", 0.3)))
        if kind == "table":
            return cls("table", points=tuple(tuple(map(float, p)) for p in cfg["points"]))
        raise ExponentError(f"unknown exponent law {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "rational":
            return {"type": "rational", "a": self.a, "b": self.b}
        return {"type": "table", "points": [list(p) for p in self.points]}

    def __call__(self, c):
        c = np.asarray(c, dtype=float)
        if self.kind == "rational":
            if np.any(c <= -1.0):
                raise ExponentError("rational exponent law evaluated at c <= -1")
            return self.a + self.b * c / (1.0 + c)
        pts = np.asarray(self.points)
        return np.interp(c, pts[:, 0], pts[:, 1])

    def derivative(self, c):
        c = np.asarray(c, dtype=float)
        if self.kind == "rational":
            return self.b / (1.0 + c) ** 2
        pts = np.asarray(self.points)
        slopes = np.diff(pts[:, 1]) / np.diff(pts[:, 0])
        idx = np.clip(np.searchsorted(pts[:, 0], c, side="right") - 1, 0, len(slopes) - 1)
        inside = (c >= pts[0, 0]) & (c <= pts[-1, 0])
        return np.where(inside, slopes[idx], 0.0)

    def bounds(self, c_lo, c_hi):
        vals = self(np.array([c_lo, c_hi]))
        if self.kind == "table":
            pts = np.asarray(self.points)
            inner = pts[(pts[:, 0] > c_lo) & (pts[:, 0] < c_hi), 1]
            vals = np.concatenate([vals, inner])
        return float(vals.min()), float(vals.max())

    def holder_constant(self, c_lo, c_hi):
        """Lipschitz (Hoelder-1) constant of r on [c_lo, c_hi]."""
        if self.kind == "rational":
            return self.b / (1.0 + c_lo) ** 2
        pts = np.asarray(self.points)
        return float(np.max(np.abs(np.diff(pts[:, 1]) / np.diff(pts[:, 0]))))


# ----------------------------------------------------------- exponent field
class ExponentField:
    """x -> r(x) with 1 < r_minus <= r <= r_plus < inf checked at every sample.

    Build with :meth:`constant`, :meth:`from_function`,
    :meth:`from_concentration` or :meth:`piecewise_constant`.
    """

    def __init__(self, sampler, r_minus, r_plus, description=""):
        self._sampler = sampler
        self.r_minus = float(r_minus)
        self.r_plus = float(r_plus)
        self.description = description
        if not (1.0 < self.r_minus <= self.r_plus < np.inf):
            raise ExponentError(f"exponent bounds must satisfy 1 < r- <= r+ < inf, got [{r_minus}, {r_plus}]")

    @classmethod
    def constant(cls, p):
        p = float(p)
        return cls(lambda mesh, ref: np.full((mesh.n_elements, len(ref)), p), p, p, f"constant {p}")

    @classmethod
    def from_function(cls, func: Callable, r_minus, r_plus, description="r(x)"):
        def sampler(mesh, ref):
            X = mesh.map_points(ref)
            return np.asarray(func(X.reshape(-1, 2)), dtype=float).reshape(X.shape[:2])
        return cls(sampler, r_minus, r_plus, description)

    @classmethod
    def from_concentration(cls, law: ScalarExponentLaw, C: FEFunction, c_range, delta_frac=0.01):
        """r(x) = law(clamp(C(x))) with clamping to [c- - d, c+ + d], d = delta_frac (c+ - c-)."""
        lo, hi = map(float, c_range)
        d = delta_frac * (hi - lo)
        lo, hi = lo - d, hi + d
        rmin, rmax = law.bounds(lo, hi)

        def sampler(mesh, ref):
            if mesh is not C.space.mesh:
                raise ExponentError("concentration lives on a different mesh")
            return law(np.clip(C.values_at(ref), lo, hi))
        f = cls(sampler, rmin, rmax, f"r(C) with {law.to_config()}")
        f.law, f.concentration, f.clamp = law, C, (lo, hi)
        return f

    @classmethod
    def piecewise_constant(cls, values, mesh: Mesh):
        values = np.asarray(values, dtype=float)

        def sampler(m, ref):
            if m is not mesh:
                raise ExponentError("piecewise-constant exponent lives on a different mesh")
            return np.repeat(values[:, None], len(ref), axis=1)
        f = cls(sampler, values.min(), values.max(), "piecewise constant")
        f.element_values = values
        return f

    @property
    def is_constant(self):
        return self.r_minus == self.r_plus

    def sample(self, mesh: Mesh, ref_points) -> np.ndarray:
        """Exponent at reference points of every element, shape (ne, nq)."""
        vals = np.asarray(self._sampler(mesh, np.atleast_2d(ref_points)), dtype=float)
        tol = 1e-12
        if np.any(vals < self.r_minus - tol) or np.any(vals > self.r_plus + tol) or np.any(vals <= 1.0):
            e, q = np.unravel_index(np.argmax((vals < self.r_minus - tol) | (vals > self.r_plus + tol) | (vals <= 1)),
                                    vals.shape)
            raise ExponentError(
                f"exponent {vals[e, q]} outside [{self.r_minus}, {self.r_plus}] at element {e}, point {q}")
        return vals

    def __repr__(self):
        return f"ExponentField({self.description}, [{self.r_minus:.4g}, {self.r_plus:.4g}])"


def conjugate(r: ExponentField) -> ExponentField:
    """Pointwise r / (r - 1); the bounds swap roles."""
    f = ExponentField(lambda mesh, ref: (lambda v: v / (v - 1.0))(r.sample(mesh, ref)),
                      r.r_plus / (r.r_plus - 1.0), r.r_minus / (r.r_minus - 1.0), f"conjugate of {r.description}")
    if hasattr(r, "element_values"):
        f.element_values = r.element_values / (r.element_values - 1.0)
    return f


# ----------------------------------------------------------- sampled fields
@dataclass
class QuadField:
    """Nonnegative magnitudes sampled at the quadrature points of a mesh."""

    mesh: Mesh
    values: np.ndarray   # (ne, nq)
    rule: object = DEFAULT_RULE

    @property
    def weights(self):
        return np.abs(np.linalg.det(self.mesh.jacobians))[:, None] * self.rule.weights[None, :]

    def __mul__(self, a):
        return QuadField(self.mesh, abs(a) * self.values, self.rule)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return QuadField(self.mesh, self.values / abs(a), self.rule)

    def restrict(self, element_mask):
        return QuadField(self.mesh, np.where(np.asarray(element_mask)[:, None], self.values, 0.0), self.rule)


def sample(f, mesh: Mesh | None = None, rule=DEFAULT_RULE, which="value") -> QuadField:
    """Magnitude of ``f`` (or of its gradient) at quadrature points."""
    if isinstance(f, QuadField):
        return f
    if isinstance(f, FEFunction):
        mesh = f.space.mesh
        v = f.values(rule) if which == "value" else f.grads(rule)
        if which == "value":
            mag = np.abs(v) if v.ndim == 2 else np.linalg.norm(v, axis=-1)
        else:
            mag = np.linalg.norm(v.reshape(v.shape[0], v.shape[1], -1), axis=-1)
        return QuadField(mesh, mag, rule)
    if callable(f):
        if mesh is None:
            raise ValueError("a mesh is needed to sample a callable")
        X = mesh.map_points(rule.points)
        v = np.asarray(f(X.reshape(-1, 2)), dtype=float).reshape(X.shape[0], X.shape[1], -1)
        return QuadField(mesh, np.linalg.norm(v, axis=-1), rule)
    raise TypeError(f"cannot sample {type(f).__name__}")


def _pow(values, r):
    out = np.zeros_like(values)
    nz = values > 0
    out[nz] = np.exp(r[nz] * np.log(values[nz]))
    return out


def modular(f, r: ExponentField, mesh=None, rule=DEFAULT_RULE) -> float:
    """Quadrature approximation of the integral of |f|^r(x)."""
    q = sample(f, mesh, rule)
    rv = r.sample(q.mesh, q.rule.points)
    return float(np.sum(q.weights * _pow(q.values, rv)))


def luxemburg_norm(f, r: ExponentField, mesh=None, rule=DEFAULT_RULE, tol=1e-12) -> float:
    """inf{lam > 0 : modular(f / lam) <= 1}, by bisection in log(lam)."""
    q = sample(f, mesh, rule)
    rv = r.sample(q.mesh, q.rule.points)
    w = q.weights
    nz = (q.values > 0) & (w > 0)
    if not nz.any():
        return 0.0
    lv, rr, ww = np.log(q.values[nz]), rv[nz], w[nz]

    def rho(loglam):
        return float(np.sum(ww * np.exp(rr * (lv - loglam))))

    rho1 = rho(0.0)
    if not np.isfinite(rho1):
        raise ExponentError("modular is not finite")
    # rho(f/lam) lies between lam^-r- rho(f) and lam^-r+ rho(f)
    a = np.log(rho1) / r.r_plus
    b = np.log(rho1) / r.r_minus
    lo, hi = min(a, b) - 1e-9, max(a, b) + 1e-9
    if not (rho(lo) >= 1.0 >= rho(hi)):
        raise ExponentError("Luxemburg bisection bracket failure")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = rho(mid)
        if abs(val - 1.0) <= tol:
            break
        if val > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return float(np.exp(mid))


def sobolev_norm(u: FEFunction, r: ExponentField, rule=DEFAULT_RULE) -> float:
    """||u||_{1,r} = ||u||_r + ||grad u||_r."""
    return (luxemburg_norm(sample(u, rule=rule), r)
            + luxemburg_norm(sample(u, rule=rule, which="grad"), r))


def log_holder_estimate(r: ExponentField, mesh: Mesh, ref_points=None, max_points=4000) -> float:
    """Largest sampled |r(x) - r(y)| * (-log|x - y|) over pairs with 0 < |x - y| <= 1/2.

    A lower witness of the log-Hoelder constant. Default samples are the
    element vertices and barycentres.
    """
    if ref_points is None:
        ref_points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1 / 3, 1 / 3]])
    X = mesh.map_points(ref_points).reshape(-1, 2)
    R = r.sample(mesh, ref_points).reshape(-1)
    # merge coincident points (shared vertices)
    key = np.round(X, 12)
    _, idx = np.unique(key, axis=0, return_index=True)
    X, R = X[idx], R[idx]
    if len(X) > max_points:
        sel = np.random.default_rng(0).choice(len(X), max_points, replace=False)
        X, R = X[sel], R[sel]
    best = 0.0
    for s in range(0, len(X), 512):
        d = np.linalg.norm(X[s:s + 512, None, :] - X[None, :, :], axis=2)
        ok = (d > 0) & (d <= 0.5)
        if ok.any():
            val = np.abs(R[s:s + 512, None] - R[None, :]) * -np.log(np.where(ok, d, 0.5))
            best = max(best, float(val[ok].max()))
    return best


def key_estimate_witness(f_values, weights, r_values, m, measure=None) -> float:
    """Smallest c such that (mean |f|)^r(x) <= c (mean |f|^r(y) + |Q|^m) at every sample x.

    All arrays are samples on a set Q with quadrature weights; ``measure``
    defaults to the sum of the weights.
    """
    f = np.abs(np.asarray(f_values, dtype=float)).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    rv = np.asarray(r_values, dtype=float).ravel()
    size = float(w.sum()) if measure is None else float(measure)
    mean = float(np.sum(w * f) / w.sum())
    if mean > size ** (-m) * (1 + 1e-12):
        raise ExponentError(f"key estimate precondition violated: mean {mean} > |Q|^-m = {size ** -m}")
    rhs = float(np.sum(w * _pow(f, rv)) / w.sum()) + size ** m
    if mean == 0.0:
        return 0.0
    return float(np.max(mean ** rv) / rhs)


def local_exponent(r: ExponentField, mesh: Mesh, rule=DEFAULT_RULE) -> ExponentField:
    """Per-element minimum of r over the element's vertices and quadrature points."""
    ref = np.vstack([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], rule.points])
    vals = r.sample(mesh, ref).min(axis=1)
    return ExponentField.piecewise_constant(vals, mesh)
