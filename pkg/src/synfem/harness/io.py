"""Solution containers (npz + JSON header) and CSV tables."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def save_solution(path, result, extra=None):
    """Write U, P, C coefficient vectors with a JSON header describing the spaces."""
    path = Path(path)
    header = {
        "spaces": {k: {"tag": f.space.tag, "ndofs": int(f.space.ndofs), "dim": int(f.space.dim)}
                   for k, f in (("U", result.U), ("P", result.P), ("C", result.C))},
        "outer_iterations": result.outer_iterations,
        "converged": bool(result.converged),
        "flagged_bounds": bool(result.flagged_bounds),
        **(extra or {}),
    }
    np.savez(path, U=result.U.coeffs, P=result.P.coeffs, C=result.C.coeffs,
             header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8))
    return path


def load_solution(path):
    """Return (header dict, {"U": array, "P": array, "C": array})."""
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        return header, {k: data[k].copy() for k in ("U", "P", "C")}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, rows, columns=None):
    rows = list(rows)
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
    return Path(path)


def write_mask(path, mask):
    """Per-element 0/1 CSV."""
    return write_csv(path, [{"element": i, "value": int(b)} for i, b in enumerate(np.asarray(mask))])
