"""Manufactured Stokes flow: check that P2/P0 reaches its textbook rates.

The velocity is the curl of a polynomial stream function, so it is divergence
free and vanishes on the boundary. With r = 2 the stress law is linear and the
velocity H1 error should drop like h^2. The exact pressure is zero, so the
P0 pressure only picks up the discretization error and decays faster than
its O(h) approximation rate would suggest.
"""
from pathlib import Path

from synfem.harness.config import ExperimentConfig
from synfem.harness.study import convergence_study

HERE = Path(__file__).parent

cfg = ExperimentConfig.load(HERE / "configs" / "newtonian_mms.json")
table = convergence_study(cfg, levels=4)
print(table)

print("velocity H1 orders:", [round(o, 2) for o in table.orders("err_u_h1")])
print("pressure L2 orders:", [round(o, 2) for o in table.orders("err_p_l2")])
