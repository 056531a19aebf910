"""Command-line interface: ``synfem {run,study,diagnose,mesh-info}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from ..mesh import MeshError, load_mesh, refine_uniform, shape_regularity
from .config import ConfigError, ExperimentConfig

log = logging.getLogger("synfem")
DIAGNOSTICS = ("infsup", "truncation", "bogovskii", "projections", "holder")


def _error(kind, message, code=2):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def cmd_run(args):
    from .study import run

    cfg = ExperimentConfig.load(args.config)
    table = run(cfg, args.levels)
    print(table)
    print(f"artifacts written to {cfg.output}")
    return 0 if all(r["converged"] for r in table.rows) else 1


def cmd_study(args):
    from .study import convergence_study

    cfg = ExperimentConfig.load(args.config)
    table = convergence_study(cfg, args.levels, beta=args.beta)
    print(table)
    if args.csv:
        table.write(args.csv)
    return 0


def _diagnose(which, cfg, mesh_list):
    from .. import diagnostics as dg
    from ..fespace import build_spaces
    from ..projections import projection_report
    from ..solver import exponent_field, solve_coupled
    from .study import build_problem

    rows = []
    for k, mesh in enumerate(mesh_list):
        row = {"level": k, "h_max": float(mesh.h_max)}
        spaces = build_spaces(mesh, cfg["pairing"])
        if which == "infsup":
            row["beta"] = dg.infsup_constant(spaces)
        elif which == "projections":
            rep = projection_report(lambda X: np.column_stack([np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1]),
                                                               X[:, 0] * X[:, 1] * (1 - X[:, 0]) * (1 - X[:, 1])]),
                                    lambda X: np.cos(np.pi * X[:, 0]) * X[:, 1],
                                    lambda X: np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1]), spaces)
            row.update(c1=rep.c1, c2=rep.c2, c3=rep.c3, div_defect=rep.div_defect)
        elif which == "bogovskii":
            res = dg.discrete_bogovskii(lambda X: (X[:, 0] - 0.5) ** 3 + (X[:, 0] - 0.5) * (X[:, 1] - 0.5), spaces)
            row.update(divergence_defect=res.divergence_defect, ratio=res.ratio)
        else:
            problem, _ = build_problem(cfg, mesh)
            res = solve_coupled(problem, cfg.solver)
            if which == "holder":
                row["holder"] = dg.holder_quotient(res.C, 0.25)
            else:
                r = exponent_field(res.C, problem)
                M = dg.maximal_function(res.U)
                lam = float(np.quantile(M, 0.9))
                W, rep = dg.lipschitz_truncate(res.U, lam, M)
                out = dg.truncation_smallness(res.U, r, spaces[1])
                row.update(lam=lam, A=rep.A, kappa=rep.kappa, sup_ratio=rep.sup_ratio, equality=rep.equality_ok,
                           smallness_C=out["C"])
        rows.append(row)
        print(json.dumps(row))
    return rows


def cmd_diagnose(args):
    from . import io
    from .study import meshes

    cfg = ExperimentConfig.load(args.config)
    rows = _diagnose(args.which, cfg, meshes(cfg, args.levels))
    if args.csv:
        io.write_csv(args.csv, rows)
    return 0


def cmd_mesh_info(args):
    mesh = load_mesh(args.mesh)
    for _ in range(args.refine):
        mesh = refine_uniform(mesh)
    info = {
        "vertices": mesh.n_vertices, "elements": mesh.n_elements, "edges": mesh.n_edges,
        "boundary_edges": len(mesh.boundary_edges), "h_max": float(mesh.h_max),
        "area": float(np.sum(mesh.areas)), "shape_regularity": shape_regularity(mesh),
    }
    print(json.dumps(info, indent=2))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="synfem", description="Mixed FE solver for power-law flow coupled to a concentration")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve and write artifacts")
    r.add_argument("--config", required=True)
    r.add_argument("--levels", type=int)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("study", help="convergence study over uniform refinements")
    s.add_argument("--config", required=True)
    s.add_argument("--levels", type=int, default=4)
    s.add_argument("--beta", action="store_true", help="also compute the inf-sup constant per level")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_study)

    d = sub.add_parser("diagnose", help="analysis diagnostics per refinement level")
    d.add_argument("--config", required=True)
    d.add_argument("--which", choices=DIAGNOSTICS, required=True)
    d.add_argument("--levels", type=int)
    d.add_argument("--csv")
    d.set_defaults(func=cmd_diagnose)

    m = sub.add_parser("mesh-info", help="summary of a mesh file")
    m.add_argument("mesh")
    m.add_argument("--refine", type=int, default=0)
    m.set_defaults(func=cmd_mesh_info)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "pointer": exc.pointer, "message": str(exc)}), file=sys.stderr)
        return 2
    except MeshError as exc:
        return _error("mesh", str(exc))
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        return _error(type(exc).__name__, str(exc), 3)


if __name__ == "__main__":
    sys.exit(main())
