"""LP-based pseudodistance between convex point-set hulls.

Three related forms are provided:

* the classic function with artificial variables, value in [0, 2];
* the reduced form (valid when the origin is strictly inside the first
  hull), value in [0, 1], equal to 1 minus the largest shrink factor of the
  second body that still touches the first;
* the active-point restriction, a plain constrained linear system over the
  vertices that carry nonzero optimal weight.

Positive value is equivalent to disjoint hulls, which is what the planner
constrains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ConvexPolytope, separation
from .simplex import LpBreakdownError, LpProblem, LpStatus, solve_lp

__all__ = [
    "J2Result",
    "MjAssembly",
    "ActivePointSet",
    "OriginNotInteriorError",
    "IntersectingBodiesError",
    "j2_classic",
    "j2_mj",
    "assemble_mj",
    "origin_in_interior",
    "extract_active_points",
    "apmj_residuals",
    "shrink_oracle",
]

ACTIVE_WEIGHT_THRESHOLD = 1e-7


class OriginNotInteriorError(ValueError):
    """The reduced form requires the origin strictly inside the first hull."""


class IntersectingBodiesError(ValueError):
    """Active-point extraction needs disjoint bodies (positive pseudodistance)."""


@dataclass(frozen=True)
class J2Result:
    """Optimal value and weights; artificial variables for the classic form."""

    value: float
    x_weights: np.ndarray
    y_weights: np.ndarray
    z: np.ndarray | None = None
    z_m1: float | None = None
    z_m2: float | None = None

    @property
    def sigma_a(self) -> float:
        return float(np.sum(self.x_weights))

    @property
    def sigma_b(self) -> float:
        return float(np.sum(self.y_weights))


@dataclass(frozen=True)
class MjAssembly:
    """Compact reduced-form data: min 1 + c^T p s.t. Qp = b, p >= 0.

    Q stacks [A, -B] over a row of ones against the first body's weights;
    b = (0, ..., 0, 1); c = (0, ..., 0, -1, ..., -1).
    """

    q: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def p_dim(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True)
class ActivePointSet:
    """Vertices carrying nonzero optimal weight, with renormalized weights."""

    a_points: np.ndarray
    b_points: np.ndarray
    a_indices: tuple[int, ...]
    b_indices: tuple[int, ...]
    x_weights: np.ndarray
    y_weights: np.ndarray


def _check_same_dim(a: ConvexPolytope, b: ConvexPolytope) -> int:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return a.dim


def j2_classic(a: ConvexPolytope, b: ConvexPolytope) -> J2Result:
    """Classic pseudodistance with artificial variables (value in [0, 2])."""
    m = _check_same_dim(a, b)
    A = a.points.T
    B = b.points.T
    n1, n2 = a.n_points, b.n_points
    # Variables: [x (n1), y (n2), z (m), z_{m+1}, z_{m+2}], all >= 0.
    n = n1 + n2 + m + 2
    a_eq = np.zeros((m + 2, n))
    a_eq[:m, :n1] = A
    a_eq[:m, n1 : n1 + n2] = -B
    a_eq[:m, n1 + n2 : n1 + n2 + m] = np.eye(m)
    a_eq[m, :n1] = 1.0
    a_eq[m, n1 + n2 + m] = 1.0
    a_eq[m + 1, n1 : n1 + n2] = 1.0
    a_eq[m + 1, n1 + n2 + m + 1] = 1.0
    b_eq = np.zeros(m + 2)
    b_eq[m] = 1.0
    b_eq[m + 1] = 1.0
    c = np.zeros(n)
    c[n1 + n2 :] = 1.0

    sol = solve_lp(LpProblem(c, a_eq, b_eq))
    if sol.status is not LpStatus.OPTIMAL:
        # The feasible region is provably nonempty; anything else is a fault.
        raise LpBreakdownError(f"classic pseudodistance LP returned {sol.status}")
    y = sol.y_opt
    return J2Result(
        value=float(sol.value),
        x_weights=y[:n1].copy(),
        y_weights=y[n1 : n1 + n2].copy(),
        z=y[n1 + n2 : n1 + n2 + m].copy(),
        z_m1=float(y[n1 + n2 + m]),
        z_m2=float(y[n1 + n2 + m + 1]),
    )


def origin_in_interior(a: ConvexPolytope, tol: float = 1e-9) -> bool:
    """Strict-interior test for the origin via a small auxiliary LP.

    Maximizes e such that the origin is a convex combination with all
    weights >= e; strictly interior iff the optimum exceeds tol.
    """
    A = a.points.T
    m, n1 = A.shape
    if n1 < m + 1:
        return False
    # Variables [w (n1), e]: A(w + e*1) = 0, sum(w) + n1*e = 1, w,e >= 0; max e.
    a_eq = np.zeros((m + 1, n1 + 1))
    a_eq[:m, :n1] = A
    a_eq[:m, n1] = A.sum(axis=1)
    a_eq[m, :n1] = 1.0
    a_eq[m, n1] = float(n1)
    b_eq = np.zeros(m + 1)
    b_eq[m] = 1.0
    c = np.zeros(n1 + 1)
    c[n1] = -1.0
    sol = solve_lp(LpProblem(c, a_eq, b_eq))
    return sol.status is LpStatus.OPTIMAL and -sol.value > tol


def assemble_mj(a: ConvexPolytope, b: ConvexPolytope) -> MjAssembly:
    """Exact block layout of the reduced-form program."""
    m = _check_same_dim(a, b)
    if not origin_in_interior(a):
        raise OriginNotInteriorError(
            "origin must lie strictly inside the first hull; transform frames first"
        )
    n1, n2 = a.n_points, b.n_points
    q = np.zeros((m + 1, n1 + n2))
    q[:m, :n1] = a.points.T
    q[:m, n1:] = -b.points.T
    q[m, :n1] = 1.0
    bvec = np.zeros(m + 1)
    bvec[m] = 1.0
    c = np.zeros(n1 + n2)
    c[n1:] = -1.0
    return MjAssembly(q, bvec, c)


def _solve_mj_standard_form(asm: MjAssembly, n1: int, n2: int):
    """Standard-form solve: the cap on the second body's total weight is
    carried as a slack row; the redundant nonnegativity of the objective is
    dropped (inactive at optimum)."""
    m1 = asm.q.shape[0]
    n = n1 + n2 + 1
    a_eq = np.zeros((m1 + 1, n))
    a_eq[:m1, : n1 + n2] = asm.q
    a_eq[m1, n1 : n1 + n2] = 1.0
    a_eq[m1, n1 + n2] = 1.0
    b_eq = np.concatenate([asm.b, [1.0]])
    c = np.concatenate([asm.c, [0.0]])
    sol = solve_lp(LpProblem(c, a_eq, b_eq))
    if sol.status is not LpStatus.OPTIMAL:
        raise LpBreakdownError(f"reduced pseudodistance LP returned {sol.status}")
    return sol


def j2_mj(
    a: ConvexPolytope, b: ConvexPolytope, check_interior: bool = True
) -> J2Result:
    """Reduced pseudodistance (value in [0, 1]); requires origin inside hull a.

    `check_interior=False` skips the precondition LP for callers that
    construct the first body around the origin themselves.
    """
    m = _check_same_dim(a, b)
    if check_interior and not origin_in_interior(a):
        raise OriginNotInteriorError(
            "origin must lie strictly inside the first hull; transform frames first"
        )
    n1, n2 = a.n_points, b.n_points
    q = np.zeros((m + 1, n1 + n2))
    q[:m, :n1] = a.points.T
    q[:m, n1:] = -b.points.T
    q[m, :n1] = 1.0
    bvec = np.zeros(m + 1)
    bvec[m] = 1.0
    c = np.zeros(n1 + n2)
    c[n1:] = -1.0
    asm = MjAssembly(q, bvec, c)
    sol = _solve_mj_standard_form(asm, n1, n2)
    y = sol.y_opt
    return J2Result(
        value=1.0 + float(sol.value),
        x_weights=y[:n1].copy(),
        y_weights=y[n1 : n1 + n2].copy(),
    )


def solve_mj_assembly(asm: MjAssembly, n1: int, n2: int) -> float:
    """Value 1 + c^T p* obtained by the standard-form solve of an assembly."""
    sol = _solve_mj_standard_form(asm, n1, n2)
    return 1.0 + float(sol.value)


def extract_active_points(
    a: ConvexPolytope,
    b: ConvexPolytope,
    result: J2Result,
    threshold: float = ACTIVE_WEIGHT_THRESHOLD,
) -> ActivePointSet:
    """Vertices with weight above the threshold, weights renormalized.

    Both weight vectors are scaled by the surviving first-body mass so the
    unit-sum row stays exact and the value 1 - sum(y) is preserved.
    """
    if result.value <= 0.0:
        raise IntersectingBodiesError("active points are undefined for touching bodies")
    ai = tuple(int(i) for i in np.flatnonzero(result.x_weights > threshold))
    bi = tuple(int(j) for j in np.flatnonzero(result.y_weights > threshold))
    if not ai or not bi:
        raise ValueError(f"threshold {threshold} leaves an empty active set")
    xw = result.x_weights[list(ai)].copy()
    yw = result.y_weights[list(bi)].copy()
    scale = float(np.sum(xw))
    xw /= scale
    yw /= scale
    return ActivePointSet(
        a_points=a.points[list(ai)].copy(),
        b_points=b.points[list(bi)].copy(),
        a_indices=ai,
        b_indices=bi,
        x_weights=xw,
        y_weights=yw,
    )


def apmj_residuals(active: ActivePointSet, x: np.ndarray, y: np.ndarray):
    """Residuals of the active-point linear system and its value 1 - sum(y).

    Returns (residuals, value) where residuals stacks the point-matching
    rows over the unit-sum row; no optimization is performed.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (active.a_points.shape[0],) or y.shape != (active.b_points.shape[0],):
        raise ValueError("weight dimensions do not match the active sets")
    match = active.a_points.T @ x - active.b_points.T @ y
    res = np.concatenate([match, [np.sum(x) - 1.0]])
    return res, float(1.0 - np.sum(y))


def shrink_oracle(a: ConvexPolytope, b: ConvexPolytope, tol: float = 1e-9) -> float:
    """Largest shrink of b (toward the origin) whose image still meets hull a.

    Geometric bisection used only for cross-validating the reduced form;
    independent of the LP route.
    """
    if not origin_in_interior(a):
        raise OriginNotInteriorError("origin must lie strictly inside the first hull")
    disjoint, _ = separation(a.points, b.points)
    if not disjoint:
        return 1.0
    lo, hi = 0.0, 1.0  # lo: scaled copy meets a; hi: disjoint
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        disjoint, _ = separation(a.points, mid * b.points)
        if disjoint:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
