"""Neutral smooth-NLP interface with a built-in SQP solver.

Problems are posed over a bounded variable vector with an objective
callback (value + gradient) and equality / inequality constraint blocks
(values + sparse Jacobians, inequalities in g(x) <= 0 convention).  The
built-in solver is quasi-Newton SQP; stopping tests follow the
desired/acceptable threshold scheme of `SolverOptions`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .sqp import run_sqp

__all__ = [
    "NlpProblem",
    "SolverOptions",
    "NlpSolution",
    "NlpStatus",
    "KktReport",
    "solve_nlp",
    "check_kkt",
]


@dataclass
class NlpProblem:
    """Smooth NLP: min f(x) s.t. c_eq(x) = 0, c_ineq(x) <= 0, lb <= x <= ub.

    Callbacks must return finite values anywhere inside the bounds.
    Jacobians are scipy CSR matrices with a fixed sparsity pattern; the
    pattern fields declare it up front (rows, cols arrays) for validation
    and for out-of-process adapters.
    """

    n_vars: int
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]]
    lower: np.ndarray
    upper: np.ndarray
    n_eq: int = 0
    n_ineq: int = 0
    eq_constraints: Callable[[np.ndarray], tuple[np.ndarray, sp.csr_matrix]] | None = None
    ineq_constraints: Callable[[np.ndarray], tuple[np.ndarray, sp.csr_matrix]] | None = None
    eq_jac_pattern: tuple[np.ndarray, np.ndarray] | None = None
    ineq_jac_pattern: tuple[np.ndarray, np.ndarray] | None = None
    name: str = "nlp"

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (self.n_vars,) or self.upper.shape != (self.n_vars,):
            raise ValueError("bound vectors must have length n_vars")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if self.n_eq and self.eq_constraints is None:
            raise ValueError("n_eq > 0 but no equality callback")
        if self.n_ineq and self.ineq_constraints is None:
            raise ValueError("n_ineq > 0 but no inequality callback")


@dataclass
class SolverOptions:
    """Stopping thresholds; desired values dominate, acceptable values only
    terminate after holding for 15 consecutive iterations."""

    tol: float = 1e-12
    a_tol: float = 1e-16
    cv_tol: float = 1e-12
    acv_tol: float = 1e-12
    c_tol: float = 1e-4
    ac_tol: float = 1e-4
    d_tol: float = 1.0
    ad_tol: float = 1.0
    max_iterations: int = 3000
    max_seconds: float = math.inf

    def __post_init__(self):
        for name in ("tol", "a_tol", "cv_tol", "acv_tol", "c_tol", "ac_tol", "d_tol", "ad_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


class NlpStatus(Enum):
    SOLVED = "solved"
    ACCEPTABLE_LEVEL = "acceptable_level"
    ITERATION_LIMIT = "iteration_limit"
    INFEASIBLE_DETECTED = "infeasible_detected"
    FAILED = "failed"


@dataclass
class NlpSolution:
    x: np.ndarray
    status: NlpStatus
    objective: float
    max_violation: float  # scaled, the solver's stopping metric
    max_violation_raw: float  # unscaled constraint violation at x
    iterations: int
    wall_time: float
    stationarity: float
    complementarity: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray

    @property
    def solved(self) -> bool:
        return self.status is NlpStatus.SOLVED


def _empty_block(n):
    vals = np.zeros(0)
    jac = sp.csr_matrix((0, n))

    def cb(_x):
        return vals, jac

    return cb


def _row_scales(jac: sp.csr_matrix) -> np.ndarray:
    m = jac.shape[0]
    if m == 0:
        return np.zeros(0)
    absj = abs(jac)
    norms = np.asarray(absj.max(axis=1).todense()).ravel() if absj.nnz else np.zeros(m)
    return 1.0 / np.maximum(1.0, norms)


def solve_nlp(p: NlpProblem, x0: np.ndarray, opts: SolverOptions | None = None) -> NlpSolution:
    """Solve with the built-in SQP; deterministic for fixed inputs/options."""
    opts = opts or SolverOptions()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (p.n_vars,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({p.n_vars},)")
    x0 = np.clip(x0, p.lower, p.upper)

    eq_raw = p.eq_constraints or _empty_block(p.n_vars)
    in_raw = p.ineq_constraints or _empty_block(p.n_vars)

    ce0, je0 = eq_raw(x0)
    ci0, ji0 = in_raw(x0)
    if ce0.shape[0] != p.n_eq or ci0.shape[0] != p.n_ineq:
        raise ValueError("constraint callback dimensions do not match declaration")
    # Rows mixing meters, radians and LP weights: normalize by the initial
    # Jacobian row magnitudes.
    se = _row_scales(je0)
    si = _row_scales(ji0)

    def eq_scaled(x):
        c, j = eq_raw(x)
        return c * se, sp.diags(se) @ j if c.size else j

    def in_scaled(x):
        c, j = in_raw(x)
        return c * si, sp.diags(si) @ j if c.size else j

    state = run_sqp(
        p.n_vars,
        p.objective,
        eq_scaled if p.n_eq else _empty_block(p.n_vars),
        in_scaled if p.n_ineq else _empty_block(p.n_vars),
        p.lower,
        p.upper,
        x0,
        tol=opts.tol,
        a_tol=opts.a_tol,
        cv_tol=opts.cv_tol,
        acv_tol=opts.acv_tol,
        c_tol=opts.c_tol,
        ac_tol=opts.ac_tol,
        d_tol=opts.d_tol,
        ad_tol=opts.ad_tol,
        max_iterations=opts.max_iterations,
        max_seconds=opts.max_seconds,
    )

    if state.converged:
        status = NlpStatus.SOLVED
    elif state.acceptable:
        status = NlpStatus.ACCEPTABLE_LEVEL
    elif state.infeasible_detected:
        status = NlpStatus.INFEASIBLE_DETECTED
    elif state.failed:
        status = NlpStatus.FAILED
    else:
        status = NlpStatus.ITERATION_LIMIT

    ce, _ = eq_raw(state.x)
    ci, _ = in_raw(state.x)
    raw_cv = 0.0
    if ce.size:
        raw_cv = max(raw_cv, float(np.max(np.abs(ce))))
    if ci.size:
        raw_cv = max(raw_cv, float(np.max(ci.clip(min=0.0))))

    f_final, _ = p.objective(state.x)
    return NlpSolution(
        x=state.x,
        status=status,
        objective=float(f_final),
        max_violation=state.cv,
        max_violation_raw=raw_cv,
        iterations=state.iterations,
        wall_time=state.wall_time,
        stationarity=state.stationarity,
        complementarity=state.compl,
        eq_multipliers=state.y * se if state.y.size else state.y,
        ineq_multipliers=state.z * si if state.z.size else state.z,
    )


@dataclass
class KktReport:
    stationarity: float
    eq_feasibility: float
    ineq_feasibility: float
    complementarity: float
    within: bool


def check_kkt(
    p: NlpProblem,
    x: np.ndarray,
    multipliers: Mapping[str, np.ndarray] | None = None,
    tolerances: Mapping[str, float] | None = None,
) -> KktReport:
    """First-order condition report at a candidate point.

    `multipliers` may supply "eq" and "ineq" vectors; missing blocks are
    treated as zero.  Bound multipliers are absorbed by projecting the
    Lagrangian gradient onto the active-bound sign conditions.
    """
    x = np.asarray(x, dtype=float)
    multipliers = multipliers or {}
    tolerances = tolerances or {}
    tol_s = float(tolerances.get("stationarity", 1e-8))
    tol_f = float(tolerances.get("feasibility", 1e-8))
    tol_c = float(tolerances.get("complementarity", 1e-8))

    _, g = p.objective(x)
    grad_l = g.copy()
    eq_norm = 0.0
    in_norm = 0.0
    compl = 0.0
    if p.n_eq:
        ce, je = p.eq_constraints(x)
        y = np.asarray(multipliers.get("eq", np.zeros(p.n_eq)), dtype=float)
        if y.shape != (p.n_eq,):
            raise ValueError("eq multiplier dimension mismatch")
        grad_l += je.T @ y
        eq_norm = float(np.max(np.abs(ce)))
    if p.n_ineq:
        ci, ji = p.ineq_constraints(x)
        z = np.asarray(multipliers.get("ineq", np.zeros(p.n_ineq)), dtype=float)
        if z.shape != (p.n_ineq,):
            raise ValueError("ineq multiplier dimension mismatch")
        grad_l += ji.T @ z
        in_norm = float(np.max(ci.clip(min=0.0)))
        compl = float(np.max(np.abs(z * ci)))

    at_lb = x <= p.lower + 1e-9
    at_ub = x >= p.upper - 1e-9
    stat = np.abs(grad_l)
    stat[at_lb] = np.maximum(0.0, -grad_l[at_lb])
    stat[at_ub & ~at_lb] = np.maximum(0.0, grad_l[at_ub & ~at_lb])
    stat_norm = float(np.max(stat)) if stat.size else 0.0

    within = stat_norm <= tol_s and eq_norm <= tol_f and in_norm <= tol_f and compl <= tol_c
    return KktReport(stat_norm, eq_norm, in_norm, compl, within)
