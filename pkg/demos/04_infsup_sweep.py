"""Discrete inf-sup constants of the two shipped pairings under refinement.

beta is the square root of the smallest eigenvalue of the pressure Schur
complement B A^-1 B^T against the pressure mass matrix on zero-mean pressures.
A stable pairing keeps beta away from zero as h -> 0. The variable-exponent
column is a dictionary lower bound (no eigenproblem exists in that case).
"""
from synfem.diagnostics import infsup_sweep
from synfem.mesh import refine_uniform, unit_square
from synfem.varexp import ExponentField

meshes = [unit_square(2)]
for _ in range(3):
    meshes.append(refine_uniform(meshes[-1]))

for pairing in ("P2_P0", "P2bubble_P1disc"):
    rep = infsup_sweep(meshes, pairing)
    var = infsup_sweep(meshes, pairing, lambda m: ExponentField.from_function(
        lambda X: 1.6 + 0.3 * X[:, 0], 1.6, 1.9))
    print(pairing)
    for h, b, bv in zip(rep.h, rep.betas, var.betas):
        print(f"  h={h:.4f}  beta={b:.4f}  variable-exponent bound={bv:.4f}")
    print(f"  min/max ratio: {rep.ratio:.3f}")
