"""Decoupled fixed-point iteration for the coupled flow/concentration problem.

Starting from C_1 = c_d, alternate

    momentum:       find (U_k, P_k) with C_k frozen        (nonlinear saddle point)
    concentration:  find C_{k+1} in Z + c_d with U_k frozen (linear)

until the combined increment ||U_k - U_{k-1}||_{1,r-} + ||C_{k+1} - C_k||_{1,2}
drops below ``picard_tol``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import assembly, physics
from .fespace import FEFunction, apply_dirichlet, interpolate
from .linalg import nested_dissection, solve_direct
from .varexp import ExponentField, QuadField, conjugate, luxemburg_norm, modular, sample, sobolev_norm

log = logging.getLogger(__name__)

LINEARIZATIONS = ("picard", "newton-after-picard", "newton")


@dataclass
class SolverConfig:
    picard_tol: float = 1e-8
    max_outer: int = 50
    linearization: str = "picard"
    damping: float = 1.0
    linear_tol: float = 1e-10
    max_inner: int = 200
    newton_switch: float = 1e-3

    def __post_init__(self):
        if self.picard_tol <= 0 or self.linear_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.linearization not in LINEARIZATIONS:
            raise ValueError(f"linearization must be one of {LINEARIZATIONS}")

    @classmethod
    def from_config(cls, cfg: dict):
        return cls(**cfg)


@dataclass
class ModelParams:
    stress: physics.StressParams = field(default_factory=physics.StressParams)
    flux: physics.FluxParams = field(default_factory=physics.FluxParams)
    convection: bool = True


@dataclass
class Problem:
    """Everything a solve needs. ``g`` is the manufactured concentration source (MMS only)."""

    spaces: tuple
    params: ModelParams
    f: object = None
    c_d: object = 0.0
    g: object = None
    r: object = None   # exponent override (float or ExponentField); default r(C)

    @property
    def mesh(self):
        return self.spaces[0].mesh


@dataclass
class MomentumInfo:
    iterations: int
    residual: float
    constraint: float
    converged: bool
    stagnated: bool = False
    history: list = field(default_factory=list)


@dataclass
class SolveResult:
    U: FEFunction
    P: FEFunction
    C: FEFunction
    outer_iterations: int
    converged: bool
    history: list
    momentum_residual: float
    concentration_residual: float
    constraint_defect: float
    energy: dict = field(default_factory=dict)
    flagged_bounds: bool = False


def _residual_norms(sys, U, V):
    res = np.abs(sys.residual[V.free_dofs]).max() if V.dim else 0.0
    con = np.abs(sys.B @ U.coeffs).max() if sys.B.shape[0] else 0.0
    return float(res), float(con)


def _saddle(J, B, mean, V):
    m = sparse.csr_matrix(mean.reshape(-1, 1))
    K = sparse.bmat([[J, -B.T, None], [-B, None, m], [None, m.T, None]], format="csr")
    return K


def saddle_ordering(K, V, Q):
    """Fill-reducing ordering of the velocity/pressure/multiplier system (cached per space pair)."""
    cache = V.__dict__.setdefault("_saddle_order", {})
    key = (id(Q), K.shape[0])
    if key not in cache:
        coords = np.vstack([V.node_coords, V.node_coords, Q.node_coords, [V.node_coords.mean(0)]])
        late = np.zeros(K.shape[0], dtype=bool)
        late[V.ndofs:] = True
        cache[key] = nested_dissection(K, coords, late=late, last=[K.shape[0] - 1])
    return cache[key]


def solve_momentum(C, problem: Problem, cfg: SolverConfig, U0=None, P0=None):
    """Nonlinear saddle-point solve with C frozen; returns (U, P, MomentumInfo)."""
    V, Q = problem.spaces[0], problem.spaces[1]
    prm = problem.params
    U = U0.copy() if U0 is not None else FEFunction(V)
    P = P0.copy() if P0 is not None else FEFunction(Q)
    U.coeffs[V.boundary_dofs] = 0.0
    mode = "newton" if cfg.linearization == "newton" else "picard"
    hist = []
    stagnated = False
    bc = {int(d): 0.0 for d in V.boundary_dofs}

    def assemble(U, P, lin):
        return assembly.assemble_momentum(U, C, problem.spaces, prm.stress, problem.f, P, problem.r,
                                          lin, prm.convection)

    sys = assemble(U, P, mode)
    res, con = _residual_norms(sys, U, V)
    for it in range(cfg.max_inner + 1):
        hist.append(max(res, con))
        if max(res, con) <= cfg.linear_tol:
            return U, P, MomentumInfo(it, res, con, True, False, hist)
        if it == cfg.max_inner:
            break
        if len(hist) > 5 and hist[-1] > 0.99 * hist[-6]:
            stagnated = True
            log.warning("momentum iteration stagnated at residual %.3e", hist[-1])
            break
        if cfg.linearization == "newton-after-picard" and mode == "picard" and res < cfg.newton_switch:
            mode = "newton"
            sys = assemble(U, P, mode)
        K = _saddle(sys.A, sys.B, sys.mean, V)
        nq = Q.ndofs
        rhs = -np.concatenate([sys.residual, -(sys.B @ U.coeffs), [sys.mean @ P.coeffs]])
        K, rhs = apply_dirichlet(V, K, rhs, bc)
        delta = solve_direct(K, rhs, saddle_ordering(K, V, Q), pivot_thresh=1e-3)
        dU, dP = delta[:V.ndofs], delta[V.ndofs:V.ndofs + nq]
        step = cfg.damping
        for _ in range(6):
            Un = FEFunction(V, U.coeffs + step * dU)
            Pn = FEFunction(Q, P.coeffs + step * dP)
            sys_n = assemble(Un, Pn, mode)
            res_n, con_n = _residual_norms(sys_n, Un, V)
            if max(res_n, con_n) <= max(res, con) or max(res_n, con_n) <= cfg.linear_tol:
                break
            step *= 0.5
        U, P, sys, res, con = Un, Pn, sys_n, res_n, con_n
    return U, P, MomentumInfo(len(hist) - 1, res, con, False, stagnated, hist)


def initial_concentration(problem: Problem) -> FEFunction:
    Z = problem.spaces[2]
    c_d = problem.c_d
    if isinstance(c_d, FEFunction):
        return c_d.copy()
    if callable(c_d):
        return interpolate(Z, c_d)
    return FEFunction(Z, np.full(Z.ndofs, float(c_d)))


def solve_concentration(U: FEFunction, problem: Problem, cfg: SolverConfig | None = None) -> FEFunction:
    """Linear solve for C in Z + c_d with U frozen."""
    Z = problem.spaces[2]
    sys = assembly.assemble_concentration(U, problem.spaces, problem.params.flux, g=problem.g)
    A, rhs = apply_dirichlet(Z, sys.A, sys.rhs, assembly.boundary_values(Z, initial_concentration(problem)))
    return FEFunction(Z, solve_direct(A, rhs))


def concentration_residual(C, U, problem: Problem) -> float:
    Z = problem.spaces[2]
    sys = assembly.assemble_concentration(U, problem.spaces, problem.params.flux, g=problem.g)
    r = sys.A @ C.coeffs - sys.rhs
    return float(np.abs(r[Z.free_dofs]).max()) if Z.dim else 0.0


def exponent_field(C: FEFunction, problem: Problem) -> ExponentField:
    """r^n = r(C^n) (with clamping), or the override exponent."""
    r = problem.r
    if r is None:
        sp = problem.params.stress
        return ExponentField.from_concentration(sp.law, C, sp.c_range)
    if isinstance(r, ExponentField):
        return r
    return ExponentField.constant(float(r))


def solve_coupled(problem: Problem, cfg: SolverConfig | None = None) -> SolveResult:
    cfg = cfg or SolverConfig()
    V = problem.spaces[0]
    C = initial_concentration(problem)
    U = P = None
    history = []
    converged = False
    flagged = False
    lo, hi = problem.params.stress.c_range
    for k in range(1, cfg.max_outer + 1):
        U_new, P, info = solve_momentum(C, problem, cfg, U, P)
        if not info.converged:
            log.warning("outer %d: momentum solve did not converge (residual %.3e)", k, info.residual)
        C_new = solve_concentration(U_new, problem, cfg)
        r_minus = exponent_field(C, problem).r_minus
        dU = sobolev_norm(U_new - (U if U is not None else FEFunction(V)), ExponentField.constant(r_minus))
        dC = sobolev_norm(C_new - C, ExponentField.constant(2.0))
        cmin, cmax = float(C_new.coeffs.min()), float(C_new.coeffs.max())
        out = cmin < lo - 1e-12 or cmax > hi + 1e-12
        flagged |= out
        history.append({"outer": k, "inner": info.iterations, "momentum_residual": info.residual,
                        "constraint": info.constraint, "dU": dU, "dC": dC, "increment": dU + dC,
                        "c_min": cmin, "c_max": cmax, "out_of_range": out})
        log.info("outer %d: increment %.3e (inner %d)", k, dU + dC, info.iterations)
        U, C = U_new, C_new
        if dU + dC <= cfg.picard_tol and info.converged:
            converged = True
            break
    sys = assembly.assemble_momentum(U, C, problem.spaces, problem.params.stress, problem.f, P, problem.r,
                                     "picard", problem.params.convection)
    mres, con = _residual_norms(sys, U, V)
    cres = concentration_residual(C, U, problem)
    res = SolveResult(U, P, C, len(history), converged, history, mres, cres, con, flagged_bounds=flagged)
    res.energy = energy_report(res, problem)
    return res


def energy_report(state: SolveResult, problem: Problem) -> dict:
    """Modular bounds for velocity/stress, concentration/flux and the pressure norm."""
    U, P, C = state.U, state.P, state.C
    rule = assembly.RULE
    prm = problem.params
    r = exponent_field(C, problem)
    mesh = problem.mesh
    grad_u = sample(U, rule=rule, which="grad")
    D = assembly.sym_grad(U, rule)
    rq = r.sample(mesh, rule.points)
    S = physics.stress_r(rq, D, prm.stress)
    S_mag = QuadField(mesh, np.sqrt(np.einsum("eqij,eqij->eq", S, S)), rule)
    grad_c = sample(C, rule=rule, which="grad")
    q = physics.flux(C.values(rule), C.grads(rule), D, prm.flux)
    two = ExponentField.constant(2.0)
    return {
        "UE1_grad_u": modular(grad_u, r),
        "UE1_stress": modular(S_mag, conjugate(r)),
        "UE2_grad_c": modular(grad_c, two),
        "UE2_flux": modular(QuadField(mesh, np.linalg.norm(q, axis=-1), rule), two),
        "UE4_pressure": luxemburg_norm(sample(P, rule=rule), conjugate(r)),
    }
