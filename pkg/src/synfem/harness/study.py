"""Refinement studies and the ``run`` driver."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..fespace import FEFunction, build_spaces
from ..mesh import load_mesh, refine_uniform, unit_square
from ..quadrature import triangle_rule
from ..solver import Problem, exponent_field, solve_coupled
from ..varexp import ExponentField, QuadField, luxemburg_norm
from . import io
from .config import ExperimentConfig
from .manufacture import STREAM, _lambdify, _vector, curl, manufacture, parse

log = logging.getLogger(__name__)
RULE = triangle_rule(6)
ERROR_KEYS = ("err_u_1r", "err_u_h1", "err_p_l2", "err_c_h1")


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    mms: bool = True

    def add(self, row: dict, seconds: float):
        prev = self.rows[-1] if self.rows else None
        for k in ERROR_KEYS:
            if k not in row:
                continue
            e0 = prev.get(k) if prev else None
            row["order_" + k[4:]] = (float(np.log2(e0 / row[k])) if e0 and row[k] > 0 and e0 > 0 else None)
        self.rows.append(row)
        self.timings.append({"level": row["level"], "wall_time": seconds})

    def column(self, key):
        return [r.get(key) for r in self.rows]

    def orders(self, key):
        return [r.get("order_" + key[4:]) for r in self.rows[1:]]

    def write(self, path):
        cols = []
        for r in self.rows:
            cols += [c for c in r if c not in cols]
        return io.write_csv(path, [{k: ("" if v is None else v) for k, v in r.items()} for r in self.rows], cols)

    def __str__(self):
        if not self.rows:
            return "(empty table)"
        keys = ["level", "h_max"] + [k for k in self.rows[0] if k.startswith(("err_", "order_"))]
        lines = ["  ".join(f"{k:>12}" for k in keys)]
        for r in self.rows:
            lines.append("  ".join(f"{r.get(k):>12.4g}" if isinstance(r.get(k), float)
                                   else f"{str(r.get(k, '')):>12}" for k in keys))
        return "\n".join(lines)


def meshes(cfg: ExperimentConfig, levels=None):
    m = cfg["mesh"]
    if "path" in m:
        mesh = load_mesh(cfg.base_dir / m["path"])
    else:
        mesh = unit_square(m.get("n", 4), m.get("pattern", "diagonal"))
    out = [mesh]
    for _ in range((levels or cfg["levels"]) - 1):
        out.append(refine_uniform(out[-1]))
    return out


def _scalar(expr):
    return _lambdify(parse(expr))


def build_problem(cfg: ExperimentConfig, mesh):
    """Return (Problem, Manufactured | None)."""
    spaces = build_spaces(mesh, cfg["pairing"])
    params = cfg.params
    r = cfg["exponent"]
    fcfg = cfg["f"]
    if fcfg["type"] == "manufactured":
        u = fcfg["u"] if "u" in fcfg else curl(fcfg.get("stream", STREAM))
        mms = manufacture(u, fcfg.get("p", 0), fcfg.get("c", cfg["c_d"]), params.stress, params.flux,
                          r=r, convection=params.convection)
        return Problem(spaces, params, mms.f, mms.c, mms.g, r), mms
    f = _vector([parse(e) for e in fcfg["value"]])
    return Problem(spaces, params, f, _scalar(cfg["c_d"]), None, r), None


# ------------------------------------------------------------ error norms
def _diff_field(U: FEFunction, exact, grad_exact, rule=RULE):
    mesh = U.space.mesh
    X = mesh.map_points(rule.points).reshape(-1, 2)
    shape = (mesh.n_elements, len(rule))
    dv = U.values(rule).reshape(len(X), -1) - np.asarray(exact(X), dtype=float).reshape(len(X), -1)
    g = U.grads(rule).reshape(len(X), -1)
    dg = g - np.asarray(grad_exact(X), dtype=float).reshape(len(X), -1)
    return (np.linalg.norm(dv, axis=1).reshape(shape), np.linalg.norm(dg, axis=1).reshape(shape))


def _l2(mag, mesh, rule=RULE):
    w = np.abs(np.linalg.det(mesh.jacobians))[:, None] * rule.weights
    return float(np.sqrt(np.sum(w * mag ** 2)))


def mms_errors(result, problem: Problem, mms, rule=RULE) -> dict:
    mesh = problem.mesh
    r = exponent_field(result.C, problem)
    vu, gu = _diff_field(result.U, mms.u, mms.grad_u, rule)
    X = mesh.map_points(rule.points).reshape(-1, 2)
    dp = np.abs(result.P.values(rule).ravel() - mms.p(X)).reshape(vu.shape)
    vc, gc = _diff_field(result.C, mms.c, mms.grad_c, rule)
    return {
        "err_u_1r": luxemburg_norm(QuadField(mesh, vu, rule), r) + luxemburg_norm(QuadField(mesh, gu, rule), r),
        "err_u_h1": _l2(gu, mesh, rule),
        "err_p_l2": _l2(dp, mesh, rule),
        "err_c_h1": float(np.hypot(_l2(vc, mesh, rule), _l2(gc, mesh, rule))),
    }


def eval_on(u: FEFunction, elements, X):
    """Values and gradients of ``u`` at physical points X lying in the given elements."""
    s = u.space
    mesh = s.mesh
    v0 = mesh.vertices[mesh.elements[elements, 0]]
    Jinv = mesh.jacobians_inv[elements]
    xi = np.einsum("nij,nj->ni", Jinv, X - v0)
    phi = s.family.values(xi)                                    # (N, nloc)
    dphi = np.einsum("nji,naj->nai", Jinv, s.family.grads(xi))   # (N, nloc, 2)
    loc = u.coeffs[s.cell_dofs[elements]].reshape(len(X), s.ncomp, -1)
    return np.einsum("nca,na->nc", loc, phi), np.einsum("nca,nai->nci", loc, dphi)


def reference_errors(results, problems, mesh_list, rule=RULE) -> list:
    """Errors of every level against the finest level (nested uniform refinements)."""
    fine, ref = mesh_list[-1], results[-1]
    X = fine.map_points(rule.points).reshape(-1, 2)
    fine_el = np.repeat(np.arange(fine.n_elements), len(rule))
    w = (np.abs(np.linalg.det(fine.jacobians))[:, None] * rule.weights).ravel()
    rf = {k: eval_on(getattr(ref, k), fine_el, X) for k in "UPC"}
    out = []
    anc = np.arange(fine.n_elements)
    for lvl in range(len(mesh_list) - 1, -1, -1):
        res = results[lvl]
        e = {k: eval_on(getattr(res, k), anc[fine_el], X) for k in "UPC"}
        r = exponent_field(res.C, problems[-1]) if problems[-1].r is not None else None
        gu = np.linalg.norm((e["U"][1] - rf["U"][1]).reshape(len(X), -1), axis=1)
        vu = np.linalg.norm(e["U"][0] - rf["U"][0], axis=1)
        row = {
            "err_u_h1": float(np.sqrt(w @ gu ** 2)),
            "err_p_l2": float(np.sqrt(w @ (e["P"][0] - rf["P"][0])[:, 0] ** 2)),
            "err_c_h1": float(np.sqrt(w @ (np.linalg.norm((e["C"][1] - rf["C"][1])[:, 0], axis=1) ** 2 + (e["C"][0] - rf["C"][0])[:, 0] ** 2))),
        }
        if r is not None and r.is_constant:
            shape = (fine.n_elements, len(rule))
            q = ExponentField.constant(r.r_minus)
            row["err_u_1r"] = (luxemburg_norm(QuadField(fine, vu.reshape(shape), rule), q)
                               + luxemburg_norm(QuadField(fine, gu.reshape(shape), rule), q))
        out.append(row)
        if lvl:
            anc = mesh_list[lvl].parent[anc]
    return out[::-1]


# ------------------------------------------------------------ drivers
def _level_row(k, mesh, problem, result, extra=None):
    V, Q, Z = problem.spaces
    row = {"level": k, "h_max": float(mesh.h_max), "ndofs_V": V.dim, "ndofs_Q": Q.ndofs, "ndofs_Z": Z.dim,
           "outer_iterations": result.outer_iterations, "converged": bool(result.converged),
           "constraint": result.constraint_defect}
    row.update(result.energy)
    row.update(extra or {})
    return row


def convergence_study(cfg: ExperimentConfig, levels=None, holder_alpha=0.25, beta=False, keep=False):
    """Solve on successive uniform refinements and tabulate errors and diagnostics.

    With a manufactured forcing the errors are against the exact solution,
    otherwise against the solution on the finest level. ``keep`` also returns
    the per-level (problem, result) pairs.
    """
    from ..diagnostics import holder_quotient, infsup_constant

    mesh_list = meshes(cfg, levels)
    table = ConvergenceTable(mms=cfg.manufactured)
    solved = []
    for k, mesh in enumerate(mesh_list):
        t0 = time.perf_counter()
        problem, mms = build_problem(cfg, mesh)
        result = solve_coupled(problem, cfg.solver)
        extra = mms_errors(result, problem, mms) if mms is not None else {}
        if holder_alpha:
            extra["holder"] = holder_quotient(result.C, holder_alpha)
        if beta:
            extra["beta"] = infsup_constant(problem.spaces)
        table.add(_level_row(k, mesh, problem, result, extra), time.perf_counter() - t0)
        solved.append((problem, result))
        log.info("level %d done: h=%.4g converged=%s", k, mesh.h_max, result.converged)
    if mms is None and len(mesh_list) > 1:
        errs = reference_errors([s[1] for s in solved], [s[0] for s in solved], mesh_list)
        prev, timings = table.rows, table.timings
        table.rows, table.timings = [], []
        for row, e, t in zip(prev, errs[:-1] + [{}], timings):
            table.add({**row, **e}, t["wall_time"])
    return (table, solved) if keep else table


def run(cfg: ExperimentConfig, levels=None) -> ConvergenceTable:
    """Solve, then write solutions, residual histories and diagnostic tables to the output directory."""
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    table, solved = convergence_study(cfg, levels, keep=True)
    for k, (problem, result) in enumerate(solved):
        io.save_solution(out / f"solution_L{k}.npz", result, {"level": k, "mms": cfg.manufactured})
        io.write_csv(out / f"history_L{k}.csv", result.history)
    table.write(out / "convergence.csv")
    io.write_csv(out / "timings.csv", table.timings)
    return table
