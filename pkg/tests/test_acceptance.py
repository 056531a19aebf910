"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (summary printed at the end of the
module) or ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import functools
import time

import numpy as np
import pytest

from synfem import assembly
from synfem.diagnostics import (dictionary_bound, discrete_bogovskii, discrete_lipschitz_truncate, holder_quotient,
                                infsup_constant,
                                level_bounds, lipschitz_truncate, maximal_function, select_lambda,
                                truncation_smallness)
from synfem.fespace import FEFunction, build_spaces, interpolate
from synfem.harness.config import ExperimentConfig
from synfem.harness.study import convergence_study
from synfem.mesh import Mesh, refine_uniform, unit_square
from synfem.physics import FluxParams, StressParams, verify_structural
from synfem.projections import project_Q, projection_report
from synfem.solver import exponent_field
from synfem.varexp import ExponentField, luxemburg_norm, modular, sample

LINES: dict[int, str] = {}


def report(n: int, ok: bool, detail: str):
    LINES[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(LINES[n])
    return ok


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    if tr is not None:
        tr.write_line("")
        tr.write_line("acceptance summary")
        for n in sorted(LINES):
            tr.write_line(LINES[n])


def ratio(xs):
    xs = np.asarray(xs, dtype=float)
    return float(xs.min() / xs.max())


def variation(xs):
    """max/min - 1."""
    xs = np.asarray(xs, dtype=float)
    return float(xs.max() / xs.min() - 1.0)


# ------------------------------------------------------------ shared runs
@functools.lru_cache(maxsize=None)
def mms_study(pairing, p, r, convection=True):
    cfg = ExperimentConfig.from_dict({
        "mesh": {"n": 4}, "levels": 4, "pairing": pairing, "exponent": r, "convection": convection,
        "c_d": 1, "f": {"type": "manufactured", "p": p, "c": "1"},
    })
    t0 = time.perf_counter()
    table, solved = convergence_study(cfg, holder_alpha=0, keep=True)
    return table, solved, time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def coupled_study():
    cfg = ExperimentConfig.from_dict({
        "mesh": {"n": 4}, "levels": 4, "pairing": "P2_P0", "c_d": "x", "flux": {"k0": 1.0, "k1": 0.5},
        "f": {"type": "expression", "value": ["-50*(y-0.5)", "50*(x-0.5)"]},
    })
    t0 = time.perf_counter()
    table, solved = convergence_study(cfg, holder_alpha=0.25, keep=True)
    return table, solved, time.perf_counter() - t0


P_SMOOTH = "x**3 + y**3 - 0.5"


# ------------------------------------------------------------ 1
def test_c01_skew_symmetry():
    t0 = time.perf_counter()
    mesh = refine_uniform(unit_square(2))
    V, _, Z = build_spaces(mesh)
    rng = np.random.default_rng(1)
    worst_u = worst_c = 0.0
    for _ in range(100):
        v = FEFunction(V, rng.standard_normal(V.ndofs))
        z = FEFunction(Z, rng.standard_normal(Z.ndofs))
        # scale: the integrals of the absolute integrands
        vv, gv = sample(v).values, sample(v, which="grad").values
        zz, gz = sample(z).values, sample(z, which="grad").values
        w = sample(v).weights
        su = float(np.sum(w * vv * gv * vv))
        sc = float(np.sum(w * zz * vv * gz))
        worst_u = max(worst_u, abs(assembly.trilinear_Bu(v, v, v)) / su)
        worst_c = max(worst_c, abs(assembly.trilinear_Bc(z, v, z)) / sc)
    dt = time.perf_counter() - t0
    ok = worst_u <= 1e-12 and worst_c <= 1e-12 and dt < 5
    assert report(1, ok, f"max |Bu[V,V,V]|/scale={worst_u:.2e}, |Bc[Z,V,Z]|/scale={worst_c:.2e}, {dt:.1f}s")


# ------------------------------------------------------------ 2
def test_c02_luxemburg_exactness():
    t0 = time.perf_counter()
    base = unit_square(4)
    mesh = Mesh(base.vertices * np.array([2.0, 1.5]), base.elements)   # |Omega| = 3
    area = float(np.sum(mesh.areas))
    closed = 0.0
    for c in (0.3, 1.0, 7.5):
        for p in (1.2, 2.0, 3.7):
            got = luxemburg_norm(lambda X, c=c: np.full(len(X), c), ExponentField.constant(p), mesh)
            closed = max(closed, abs(got - c * area ** (1 / p)) / (c * area ** (1 / p)))
    rng = np.random.default_rng(2)
    V, _, Z = build_spaces(unit_square(4))
    unit = 0.0
    for k in range(50):
        a, b = rng.uniform(-0.4, 0.4, 2)
        r = ExponentField.from_function(lambda X, a=a, b=b: 2.0 + a * np.sin(3 * X[:, 0]) + b * X[:, 1] ** 0.5,
                                        2.0 - abs(a) - abs(b), 2.0 + abs(a) + abs(b))
        u = FEFunction(Z, rng.standard_normal(Z.ndofs) * 10.0 ** rng.uniform(-3, 3))
        q = sample(u)
        nrm = luxemburg_norm(q, r)
        unit = max(unit, abs(modular(q / nrm, r) - 1.0))
    dt = time.perf_counter() - t0
    ok = closed <= 1e-8 and unit <= 1e-8 and dt < 10
    assert report(2, ok, f"closed-form rel err={closed:.1e}, unit-modular err={unit:.1e} (50 cases), {dt:.1f}s")


# ------------------------------------------------------------ 3
def test_c03_newtonian_mms():
    # velocity rate with p* = 0: a nonzero smooth p* caps the P2/P0 velocity
    # error at O(h) through the P0 pressure approximation
    tu, _, t1 = mms_study("P2_P0", "0", 2.0)
    tp, _, t2 = mms_study("P2_P0", P_SMOOTH, 2.0)
    tb, _, t3 = mms_study("P2bubble_P1disc", P_SMOOTH, 2.0)
    ou = tu.orders("err_u_h1")
    op = tp.orders("err_p_l2")
    ob = tb.orders("err_p_l2")
    ou_p = tp.orders("err_u_h1")
    dt = t1 + t2 + t3
    ok = ou[-1] >= 1.8 and op[-1] >= 0.8 and ob[-1] >= 1.8 and dt < 60
    assert report(3, ok, f"P2/P0 velocity H1 orders {np.round(ou, 2).tolist()} (p*=0); "
                          f"pressure L2 orders {np.round(op, 2).tolist()}; P2B/P1disc pressure orders "
                          f"{np.round(ob, 2).tolist()}; [P2/P0 velocity with smooth p*: {np.round(ou_p, 2).tolist()}]; "
                          f"{dt:.0f}s")


# ------------------------------------------------------------ 4
def test_c04_power_law_mms():
    table, solved, dt = mms_study("P2_P0", "0", 1.7)
    errs = table.column("err_u_1r")
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    conv = all(res.converged and res.outer_iterations <= 50 and res.momentum_residual <= 1e-8 for _, res in solved)
    ok = decreasing and conv and dt < 120
    assert report(4, ok, f"||.||_(1,r) errors {np.array(errs).round(5).tolist()}, outer its "
                          f"{[res.outer_iterations for _, res in solved]}, converged={conv}, {dt:.0f}s")


# ------------------------------------------------------------ 5
def test_c05_coupled_variable_exponent():
    table, solved, dt = coupled_study()
    conv = all(res.converged for _, res in solved)
    keys = ("UE1_grad_u", "UE1_stress", "UE2_grad_c", "UE2_flux")
    var = {k: variation(table.column(k)) for k in keys}
    ue4 = table.column("UE4_pressure")
    ok = conv and max(var.values()) <= 0.2 and max(ue4) <= 2 * min(ue4) and dt < 180
    assert report(5, ok, f"converged={conv}; variation " + ", ".join(f"{k}={v:.3f}" for k, v in var.items())
                  + f"; UE4 {np.round(ue4, 3).tolist()}; {dt:.0f}s")


# ------------------------------------------------------------ 6
def test_c06_divergence_constraint():
    states = []
    for args in (("P2_P0", "0", 2.0), ("P2_P0", P_SMOOTH, 2.0), ("P2bubble_P1disc", P_SMOOTH, 2.0),
                 ("P2_P0", "0", 1.7)):
        states += [res for _, res in mms_study(*args)[1]]
    states += [res for _, res in coupled_study()[1]]
    worst = max(float(np.abs(assembly.divergence_matrix(r.U.space, r.P.space) @ r.U.coeffs).max()) for r in states)
    assert report(6, worst <= 1e-9, f"max_Q |<div U, Q>| = {worst:.1e} over {len(states)} converged states")


# ------------------------------------------------------------ 7
def test_c07_infsup():
    meshes = [unit_square(n) for n in (4, 8, 16, 32)]
    out = {}
    for pairing in ("P2_P0", "P2bubble_P1disc"):
        out[pairing] = [infsup_constant(build_spaces(m, pairing)) for m in meshes]
    # variable exponents: r(C^n) of the coupled run (P2/P0) and r(x) from the default law (P2B/P1disc)
    _, solved, _ = coupled_study()
    var_p0 = [dictionary_bound(problem.spaces, exponent_field(res.C, problem)) for problem, res in solved]
    law = StressParams().law
    var_b = [dictionary_bound(build_spaces(m, "P2bubble_P1disc"),
                              ExponentField.from_function(lambda X: law(X[:, 0]), *law.bounds(0, 1)))
             for m in meshes]
    ok = (all(ratio(b) >= 0.5 and min(b) > 0 for b in out.values()) and min(var_p0) > 0 and min(var_b) > 0)
    assert report(7, ok, "; ".join(f"{k}: beta {np.round(v, 4).tolist()} (min/max {ratio(v):.3f})"
                                   for k, v in out.items())
                  + f"; dictionary bounds P2/P0 r(C^n) {np.round(var_p0, 4).tolist()},"
                    f" P2B r(x) {np.round(var_b, 4).tolist()}")


# ------------------------------------------------------------ 8
def _v(X):
    s = np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])
    return np.column_stack([s * X[:, 1], s * np.cos(X[:, 0])])


def test_c08_projection_suite():
    meshes = [unit_square(n) for n in (4, 8, 16, 32)]
    c = {1: [], 2: [], 3: []}
    defect = 0.0
    const_err = 0.0
    for pairing in ("P2_P0", "P2bubble_P1disc"):
        cs = {1: [], 2: [], 3: []}
        for m in meshes:
            spaces = build_spaces(m, pairing)
            rep = projection_report(_v, lambda X: np.exp(X[:, 0]) * np.cos(2 * X[:, 1]),
                                    lambda X: np.sin(np.pi * X[:, 0]) * X[:, 1] * (1 - X[:, 1]), spaces)
            defect = max(defect, rep.div_defect)
            cs[1].append(rep.c1)
            cs[2].append(rep.c2)
            cs[3].append(rep.c3)
            Pq = project_Q(lambda X: np.full(len(X), 2.75), spaces[1])
            const_err = max(const_err, float(np.abs(Pq.coeffs[spaces[1].cell_dofs[:, 0]] - 2.75).max()))
        for k in cs:
            c[k].append(max(cs[k]) / min(cs[k]))
    ok = defect <= 1e-9 and all(max(v) <= 2 for v in c.values()) and const_err <= 1e-14
    assert report(8, ok, f"div defect {defect:.1e}; max/min over levels c1 {np.round(c[1], 3).tolist()}, "
                         f"c2 {np.round(c[2], 3).tolist()}, c3 {np.round(c[3], 3).tolist()} (per pairing); "
                         f"Pi_Q constant error {const_err:.1e}")


# ------------------------------------------------------------ 9
def _spike(x0=(0.4, 0.6), w=0.08, amp=1.0):
    def f(X):
        e = amp * np.exp(-((X[:, 0] - x0[0]) ** 2 + (X[:, 1] - x0[1]) ** 2) / w ** 2)
        b = X[:, 0] * (1 - X[:, 0]) * X[:, 1] * (1 - X[:, 1])
        return np.column_stack([b * e, -0.5 * b * e])
    return f


def _waves(k, amp):
    def f(X):
        b = X[:, 0] * (1 - X[:, 0]) * X[:, 1] * (1 - X[:, 1])
        return amp * np.column_stack([b * np.sin(k * np.pi * X[:, 0]), b * np.cos(k * np.pi * X[:, 1])])
    return f


TRUNCATION_CORPUS = [
    (16, "diagonal", _spike(amp=1e2), 0.8),
    (16, "diagonal", _spike(amp=1e3), 0.8),
    (16, "diagonal", _spike(amp=1e4), 0.8),
    (16, "diagonal", _spike((0.2, 0.3), 0.05, 1e3), 0.8),
    (8, "crisscross", _spike((0.5, 0.5), 0.15, 50), 0.7),
    (16, "diagonal", _waves(3, 100), 0.8),
    (16, "crisscross", _waves(5, 10), 0.5),
    (32, "diagonal", _spike((0.7, 0.25), 0.04, 1e4), 0.9),
    (8, "diagonal", _waves(2, 1e4), 0.6),
    (16, "diagonal", lambda X: _spike((0.3, 0.3), 0.06, 1e3)(X) + _spike((0.7, 0.7), 0.1, 300)(X), 0.75),
]


def test_c09_lipschitz_truncation():
    t0 = time.perf_counter()
    law = StressParams().law
    r = ExponentField.from_function(lambda X: law(X[:, 0]), *law.bounds(0, 1))
    prop_a = contained = True
    ratios, bounds_ok, small_ok, kappas = [], True, True, []
    # recorded constant: 4A, the supremum observed for the McShane extension with A = 2 on the spike sweep
    C_rec = None
    for n, pattern, f, q in TRUNCATION_CORPUS:
        mesh = unit_square(n, pattern)
        V, Q, _ = build_spaces(mesh)
        v = interpolate(V, f)
        M = maximal_function(v)
        lam = float(np.quantile(M, q))
        _, rep = lipschitz_truncate(v, lam, M)
        _, rep_n = discrete_lipschitz_truncate(v, lam, Q, M)
        C_rec = 4 * rep.A if C_rec is None else C_rec
        prop_a &= rep.equality_ok
        contained &= rep_n.extra["contained_in_inflated"]
        ratios.append(rep.sup_ratio)
        kappas.append(rep.kappa)
        for j in (1, 2, 3):
            lj, _ = select_lambda(v, r, j, M=M)
            lo, hi = level_bounds(j)
            bounds_ok &= isinstance(lj, int) and lo <= lj < hi
        sm = truncation_smallness(v, r, Q)
        small_ok &= all(row["ok"] and row["contained"] for row in sm["rows"])
    dt = time.perf_counter() - t0
    ok = prop_a and contained and max(ratios) <= C_rec and bounds_ok and small_ok and dt < 60
    assert report(9, ok, f"(a) exact={prop_a}; diff set in inflated set={contained}; sup ratios max "
                         f"{max(ratios):.4f} <= C={C_rec:g}; level bounds={bounds_ok}; smallness C/2^j={small_ok}; "
                         f"kappa witnesses [{min(kappas):.3f}, {max(kappas):.3f}]; {dt:.0f}s")


# ------------------------------------------------------------ 10
def test_c10_bogovskii():
    def H(X):
        return (X[:, 0] - 0.5) ** 3 + (X[:, 0] - 0.5) * (X[:, 1] - 0.5)
    res = [discrete_bogovskii(H, build_spaces(unit_square(n))) for n in (4, 8, 16, 32)]
    defect = max(b.divergence_defect for b in res)
    rs = [b.ratio for b in res]
    ok = defect <= 1e-9 and max(rs) / min(rs) <= 2
    assert report(10, ok, f"divergence matching {defect:.1e}; norm-bound ratios {np.round(rs, 4).tolist()}")


# ------------------------------------------------------------ 11
def test_c11_holder_monitor():
    table, solved, _ = coupled_study()
    q = table.column("holder")
    v = variation(q)
    # the full quotient is attained by boundary pairs of c_d; the interior one is shown for information
    qi = [holder_quotient(res.C, 0.25, interior=True) for _, res in solved]
    assert report(11, v <= 0.25, f"alpha=0.25 quotients {np.round(q, 4).tolist()}, variation {v:.3f} "
                                 f"(interior-only {np.round(qi, 4).tolist()}, variation {variation(qi):.3f})")


# ------------------------------------------------------------ 12
def test_c12_jacobian():
    mesh = unit_square(3)
    spaces = build_spaces(mesh)
    V, Q, Z = spaces
    prm = StressParams()
    rng = np.random.default_rng(12)

    def f(X):
        return np.column_stack([np.sin(3 * X[:, 1]), X[:, 0] ** 2])
    worst = 0.0
    for k in range(20):
        U = FEFunction(V, rng.standard_normal(V.ndofs))
        U.coeffs[V.boundary_dofs] = 0.0
        P = FEFunction(Q, rng.standard_normal(Q.ndofs))
        C = FEFunction(Z, rng.uniform(0, 1, Z.ndofs))
        conv = k % 2 == 0
        sysm = assembly.assemble_momentum(U, C, spaces, prm, f, P, None, "newton", conv)
        dU, dP = rng.standard_normal(V.ndofs), rng.standard_normal(Q.ndofs)
        Jd = sysm.A @ dU - sysm.B.T @ dP
        eps = 1e-6

        def R(s):
            return assembly.momentum_residual(FEFunction(V, U.coeffs + s * dU), FEFunction(Q, P.coeffs + s * dP),
                                              C, spaces, prm, f, None, conv)
        fd = (R(eps) - R(-eps)) / (2 * eps)
        worst = max(worst, float(np.linalg.norm(Jd - fd) / np.linalg.norm(Jd)))
    assert report(12, worst <= 1e-6, f"max relative FD mismatch {worst:.1e} over 20 random states")


# ------------------------------------------------------------ 13
def test_c13_structural_sampler():
    t0 = time.perf_counter()
    rep = verify_structural(StressParams(), samples=100_000, flux_params=FluxParams(), seed=13)
    dt = time.perf_counter() - t0
    ok = rep.ok and dt < 10
    assert report(13, ok, f"{len(rep.violations)} violations in 1e5 samples (C1={rep.C1:.3g}, C2={rep.C2:.3g}, "
                          f"C3={rep.C3:.3g}), {dt:.1f}s")


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
