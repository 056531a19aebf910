"""Constitutive laws for the power-law fluid and the concentration flux.

    S(c, D)   = nu0 (kappa1 + kappa2 |D|^2)^{(r(c) - 2)/2} D
    q(c, g, D) = K(|D|) g,     K = k0 + k1 / (1 + |D|)

All functions broadcast over leading axes: ``D`` has shape (..., 2, 2),
``c`` / ``r`` shape (...). Tangents use Voigt-reduced engineering strain
e = [D11, D22, 2 D12] and stress s = [S11, S22, S12], so that
S : D(v) = s . e(v).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .varexp import ScalarExponentLaw

VOIGT_IDENTITY = np.diag([1.0, 1.0, 0.5])


@dataclass(frozen=True)
class StressParams:
    nu0: float = 1.0
    kappa1: float = 1.0
    kappa2: float = 1.0
    law: ScalarExponentLaw = field(default_factory=ScalarExponentLaw)
    c_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        if not (self.nu0 > 0 and self.kappa1 > 0 and self.kappa2 > 0):
            raise ValueError(f"stress parameters must be positive: nu0={self.nu0}, "
                             f"kappa1={self.kappa1}, kappa2={self.kappa2}")
        if self.c_range[1] < self.c_range[0]:
            raise ValueError("c_range must be increasing")

    @classmethod
    def from_config(cls, cfg: dict, law: ScalarExponentLaw | None = None, c_range=(0.0, 1.0)):
        return cls(float(cfg.get("nu0", 1.0)), float(cfg.get("kappa1", 1.0)), float(cfg.get("kappa2", 1.0)),
                   law or ScalarExponentLaw(), tuple(c_range))

    @property
    def clamp_range(self):
        lo, hi = self.c_range
        d = 0.01 * (hi - lo)
        return lo - d, hi + d

    def exponent(self, c):
        """r(c) after clamping c to the admissible range."""
        lo, hi = self.clamp_range
        return self.law(np.clip(c, lo, hi))

    def exponent_bounds(self):
        return self.law.bounds(*self.clamp_range)


@dataclass(frozen=True)
class FluxParams:
    k0: float = 1.0
    k1: float = 0.0

    def __post_init__(self):
        if not (self.k0 > 0 and self.k1 >= 0):
            raise ValueError(f"flux parameters need k0 > 0, k1 >= 0: k0={self.k0}, k1={self.k1}")

    @classmethod
    def from_config(cls, cfg: dict):
        return cls(float(cfg.get("k0", 1.0)), float(cfg.get("k1", 0.0)))

    @property
    def C4(self):
        return self.k0 + self.k1

    @property
    def C5(self):
        return self.k0


def _sq(D):
    return np.einsum("...ij,...ij->...", D, D)


def viscosity_r(r, D, p: StressParams):
    return p.nu0 * (p.kappa1 + p.kappa2 * _sq(D)) ** ((np.asarray(r) - 2.0) / 2.0)


def stress_r(r, D, p: StressParams):
    """Stress for a given exponent value (rather than a concentration)."""
    D = np.asarray(D, dtype=float)
    return viscosity_r(r, D, p)[..., None, None] * D


def stress(c, D, p: StressParams):
    return stress_r(p.exponent(c), D, p)


def conductivity(D, p: FluxParams, c=None):
    # c is accepted for a concentration-dependent K; the default law ignores it
    return p.k0 + p.k1 / (1.0 + np.sqrt(_sq(np.asarray(D, dtype=float))))


def flux(c, g, D, p: FluxParams):
    return conductivity(D, p, c)[..., None] * np.asarray(g, dtype=float)


def to_voigt(D):
    D = np.asarray(D, dtype=float)
    return np.stack([D[..., 0, 0], D[..., 1, 1], D[..., 0, 1]], axis=-1)


def stress_jacobian_r(r, D, p: StressParams):
    """ds/de on Voigt strain for exponent ``r``; shape (..., 3, 3), symmetric."""
    D = np.asarray(D, dtype=float)
    r = np.asarray(r, dtype=float)
    s = p.kappa1 + p.kappa2 * _sq(D)
    g = s ** ((r - 2.0) / 2.0)
    dg = p.kappa2 * (r - 2.0) / 2.0 * s ** ((r - 4.0) / 2.0)
    d = to_voigt(D)
    return p.nu0 * (g[..., None, None] * VOIGT_IDENTITY
                    + 2.0 * dg[..., None, None] * d[..., :, None] * d[..., None, :])


def stress_jacobian(c, D, p: StressParams):
    return stress_jacobian_r(p.exponent(c), D, p)


# ------------------------------------------------------------ structure
@dataclass
class StructuralReport:
    samples: int
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    min_monotonicity_gap: float
    max_growth_ratio: float
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def structural_constants(p: StressParams, n_grid=2001):
    """Analytic growth and coercivity constants valid over the exponent range.

    Growth:      |S| <= C1 (|B|^{r-1} + 1)
    Coercivity:  S.B >= C2 (|B|^r + |S|^{r'}) - C3
    """
    rlo, rhi = p.exponent_bounds()
    rs = np.linspace(rlo, rhi, n_grid)
    nu, a, b = p.nu0, p.kappa1, p.kappa2
    q = (rs - 2.0) / 2.0
    C1 = nu * np.max(np.maximum(1.0, 2.0 ** ((rs - 4.0) / 2.0)) * (a ** q + b ** q))
    rp = rs / (rs - 1.0)
    lo = rs < 2.0
    c2 = np.empty_like(rs)
    c3 = np.empty_like(rs)
    # r < 2: for |B|^2 >= a/b the viscosity exceeds nu (2b)^q |B|^{r-2}
    t = (nu * b ** q[lo]) ** rp[lo]
    c2[lo] = nu * (2 * b) ** q[lo] / (1.0 + t)
    c3[lo] = c2[lo] * (1.0 + t) * (a / b) ** (rs[lo] / 2.0)
    # r >= 2: the viscosity is at least nu b^q |B|^{r-2}
    hi = ~lo
    t = (nu * (2 * a) ** q[hi]) ** rp[hi]
    c2[hi] = nu * b ** q[hi] / (1.0 + (nu * (2 * b) ** q[hi]) ** rp[hi])
    c3[hi] = c2[hi] * ((a / b) ** (rs[hi] / 2.0) + t * (a / b) ** (rp[hi] / 2.0))
    return float(C1), 0.999 * float(c2.min()), float(c3.max()) / 0.999


def monotonicity_gap(r, B1, B2, p: StressParams):
    """(S(B1) - S(B2)) : (B1 - B2), via the mean-value tangent when B1 ~ B2."""
    dB = B1 - B2
    direct = np.einsum("...ij,...ij->...", stress_r(r, B1, p) - stress_r(r, B2, p), dB)
    scale = np.sqrt(_sq(B1) + _sq(B2))
    near = np.sqrt(_sq(dB)) < 1e-4 * np.maximum(scale, 1.0)
    if not near.any():
        return direct
    x, w = np.polynomial.legendre.leggauss(8)
    t, w = 0.5 * (x + 1.0), 0.5 * w
    mv = np.zeros(direct.shape)
    for ti, wi in zip(t, w):
        Bt = B2 + ti * dB
        s = p.kappa1 + p.kappa2 * _sq(Bt)
        g = s ** ((r - 2.0) / 2.0)
        dg = p.kappa2 * (r - 2.0) / 2.0 * s ** ((r - 4.0) / 2.0)
        mv += wi * p.nu0 * (g * _sq(dB) + 2.0 * dg * np.einsum("...ij,...ij->...", Bt, dB) ** 2)
    return np.where(near, mv, direct)


def _random_sym(rng, n):
    raw = rng.standard_normal((n, 2, 2))
    B = 0.5 * (raw + raw.transpose(0, 2, 1))
    mag = 10.0 ** rng.uniform(-4, 4, n)
    return B / np.sqrt(_sq(B))[:, None, None] * mag[:, None, None]


def verify_structural(p: StressParams, samples: int = 10_000, flux_params: FluxParams | None = None,
                      seed: int = 0) -> StructuralReport:
    """Sample growth, strict monotonicity and coercivity of S and the flux bounds."""
    rng = np.random.default_rng(seed)
    fp = flux_params or FluxParams()
    C1, C2, C3 = structural_constants(p)
    lo, hi = p.clamp_range
    c = rng.uniform(lo, hi, samples)
    r = p.exponent(c)
    B = _random_sym(rng, samples)
    B1 = _random_sym(rng, samples)
    # second argument: far away or a small perturbation of B1
    pert = _random_sym(rng, samples) * 10.0 ** rng.uniform(-8, 0, samples)[:, None, None]
    B2 = np.where((rng.random(samples) < 0.5)[:, None, None], _random_sym(rng, samples), B1 + pert)
    violations = []

    S = stress_r(r, B, p)
    nS = np.sqrt(_sq(S))
    nB = np.sqrt(_sq(B))
    growth = nS / (nB ** (r - 1.0) + 1.0)
    for i in np.flatnonzero(growth > C1 * (1 + 1e-12)):
        violations.append(("growth", float(c[i]), B[i].tolist(), float(growth[i])))

    gap = monotonicity_gap(r, B1, B2, p)
    distinct = np.sqrt(_sq(B1 - B2)) > 0
    for i in np.flatnonzero(distinct & ~(gap > 0)):
        violations.append(("monotonicity", float(c[i]), B1[i].tolist(), B2[i].tolist(), float(gap[i])))

    rp = r / (r - 1.0)
    lhs = np.einsum("...ij,...ij->...", S, B)
    rhs = C2 * (nB ** r + nS ** rp) - C3
    bad = lhs < rhs - 1e-12 * np.maximum(np.abs(lhs), 1.0)
    for i in np.flatnonzero(bad):
        violations.append(("coercivity", float(c[i]), B[i].tolist(), float(lhs[i]), float(rhs[i])))

    g = rng.standard_normal((samples, 2)) * 10.0 ** rng.uniform(-4, 4, samples)[:, None]
    q = flux(c, g, B, fp)
    nq, ng = np.linalg.norm(q, axis=1), np.linalg.norm(g, axis=1)
    for i in np.flatnonzero(nq > fp.C4 * ng * (1 + 1e-12)):
        violations.append(("flux growth", float(c[i]), g[i].tolist(), float(nq[i])))
    qg = np.einsum("ij,ij->i", q, g)
    for i in np.flatnonzero(qg < fp.C5 * ng ** 2 * (1 - 1e-12)):
        violations.append(("flux coercivity", float(c[i]), g[i].tolist(), float(qg[i])))

    return StructuralReport(samples, C1, C2, C3, fp.C4, fp.C5, float(gap[distinct].min()),
                            float(growth.max()), violations)
