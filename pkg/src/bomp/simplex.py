"""Dense standard-form LP solver: two-phase simplex with Bland's rule.

Sized for the tiny programs that arise per node/obstacle pair (tens of
variables); determinism matters more than pivot speed here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "LpProblem",
    "LpSolution",
    "LpStatus",
    "LpBreakdownError",
    "solve_lp",
    "enumerate_vertices",
]

FEAS_TOL = 1e-9
MAX_PIVOTS = 5000


class LpBreakdownError(RuntimeError):
    """Numerical breakdown (singular basis beyond repair, pivot cap hit)."""


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpProblem:
    """min c^T y  s.t.  A_eq y = b_eq, y >= 0."""

    c: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        a = np.atleast_2d(np.asarray(self.a_eq, dtype=float))
        b = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        m, n = a.shape
        if c.shape != (n,) or b.shape != (m,):
            raise ValueError(f"inconsistent LP dimensions: c{c.shape}, A{a.shape}, b{b.shape}")
        if not (n >= m >= 1):
            raise ValueError(f"LP requires n >= m >= 1, got n={n}, m={m}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a_eq", a)
        object.__setattr__(self, "b_eq", b)

    @property
    def n(self) -> int:
        return self.a_eq.shape[1]

    @property
    def m(self) -> int:
        return self.a_eq.shape[0]


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    y_opt: np.ndarray | None
    value: float
    basis: tuple[int, ...]
    dual: np.ndarray | None = None


def _simplex_phase(T: np.ndarray, basis: list[int], n_total: int, banned: set[int]):
    """Run Bland's-rule pivots on tableau T in place.

    T is (m+1) x (n_total+1): last row is the (negated-cost) objective row,
    last column the rhs.  Returns "optimal" or "unbounded".
    """
    m = T.shape[0] - 1
    for _ in range(MAX_PIVOTS):
        enter = -1
        for j in range(n_total):
            if j in banned:
                continue
            if T[m, j] < -FEAS_TOL:
                enter = j
                break
        if enter < 0:
            return "optimal"
        leave = -1
        best = np.inf
        for i in range(m):
            a = T[i, enter]
            if a > FEAS_TOL:
                ratio = T[i, -1] / a
                if ratio < best - 1e-12:
                    best = ratio
                    leave = i
                elif ratio <= best + 1e-12 and leave >= 0 and basis[i] < basis[leave]:
                    leave = i
        if leave < 0:
            return "unbounded"
        piv = T[leave, enter]
        T[leave, :] /= piv
        for i in range(m + 1):
            if i != leave and T[i, enter] != 0.0:
                T[i, :] -= T[i, enter] * T[leave, :]
        basis[leave] = enter
    raise LpBreakdownError("pivot limit exceeded")


def solve_lp(p: LpProblem) -> LpSolution:
    """Two-phase simplex with explicit artificial variables and Bland's rule."""
    m, n = p.m, p.n
    A = p.a_eq.copy()
    b = p.b_eq.copy()
    neg = b < 0.0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # Phase 1 tableau: columns = [y (n), artificials (m), rhs].
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = list(range(n, n + m))

    status = _simplex_phase(T, basis, n + m, banned=set())
    if status != "optimal":
        raise LpBreakdownError("phase-1 simplex did not terminate at an optimum")
    if -T[m, -1] > 1e-7:
        return LpSolution(LpStatus.INFEASIBLE, None, np.nan, ())

    # Drive remaining artificials out of the basis where possible.
    for i in range(m):
        if basis[i] >= n:
            pivot_col = -1
            for j in range(n):
                if abs(T[i, j]) > 1e-9:
                    pivot_col = j
                    break
            if pivot_col >= 0:
                piv = T[i, pivot_col]
                T[i, :] /= piv
                for k in range(m + 1):
                    if k != i and T[k, pivot_col] != 0.0:
                        T[k, :] -= T[k, pivot_col] * T[i, :]
                basis[i] = pivot_col

    # Phase 2: replace the objective row; keep artificial columns banned.
    T[m, :] = 0.0
    T[m, :n] = p.c
    for i in range(m):
        if basis[i] < n and T[m, basis[i]] != 0.0:
            T[m, :] -= T[m, basis[i]] * T[i, :]
    banned = set(range(n, n + m))
    status = _simplex_phase(T, basis, n + m, banned=banned)
    if status == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, None, -np.inf, tuple(sorted(basis)))

    y = np.zeros(n)
    for i in range(m):
        if basis[i] < n:
            y[basis[i]] = T[i, -1]
    value = float(p.c @ y)

    if np.linalg.norm(p.a_eq @ y - p.b_eq, ord=np.inf) > 1e-6:
        raise LpBreakdownError("optimal point violates equality constraints")

    # Dual vector from the final basis: solve A_B^T v = c_B.
    dual = None
    cols = [j for j in basis if j < n]
    if len(cols) == m:
        try:
            dual = np.linalg.solve(p.a_eq[:, cols].T, p.c[cols])
        except np.linalg.LinAlgError:
            dual = None
    return LpSolution(LpStatus.OPTIMAL, y, value, tuple(sorted(basis)), dual)


def enumerate_vertices(p: LpProblem, guard: int = 20) -> list[tuple[np.ndarray, float]]:
    """All basic feasible solutions with objective values (test oracle).

    Combinatorial; refuses problems with more than `guard` columns.
    """
    m, n = p.m, p.n
    if n > guard:
        raise ValueError(f"enumerate_vertices limited to n <= {guard}, got {n}")
    out: list[tuple[np.ndarray, float]] = []
    seen: list[np.ndarray] = []
    for cols in itertools.combinations(range(n), m):
        B = p.a_eq[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        yb = np.linalg.solve(B, p.b_eq)
        if np.any(yb < -FEAS_TOL):
            continue
        y = np.zeros(n)
        y[list(cols)] = yb
        if any(np.allclose(y, s, atol=1e-9) for s in seen):
            continue
        seen.append(y)
        out.append((y, float(p.c @ y)))
    return out
