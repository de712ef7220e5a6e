"""Sequential quadratic programming with a limited-memory BFGS Hessian.

Each iteration solves a convex QP model of the scaled problem by the
interior-point solver in `qp`, then performs an l1-penalty line search.
Inconsistent QP linearizations fall back to an elastic reformulation that
penalizes constraint slacks, so a step always exists.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .qp import BOperator, solve_qp

__all__ = ["SqpState", "run_sqp"]

_BFGS_MEMORY = 25
_ACCEPT_C1 = 1e-4
_ALPHA_MIN = 1e-12


class _LbfgsHessian:
    """Compact-form damped BFGS approximation B = sigma I - Psi inv(M) Psi'."""

    def __init__(self, n: int, memory: int = _BFGS_MEMORY):
        self.n = n
        self.memory = memory
        self.s_list: list[np.ndarray] = []
        self.y_list: list[np.ndarray] = []
        self.sigma = 1.0
        self._compact = None

    def reset(self):
        self.s_list.clear()
        self.y_list.clear()
        self.sigma = 1.0
        self._compact = None

    def _build(self):
        if not self.s_list:
            self._compact = None
            return
        S = np.column_stack(self.s_list)
        Y = np.column_stack(self.y_list)
        sty = S.T @ Y
        L = np.tril(sty, -1)
        D = np.diag(np.diag(sty))
        psi = np.hstack([Y, self.sigma * S])
        m = S.shape[1]
        mblock = np.zeros((2 * m, 2 * m))
        mblock[:m, :m] = -D
        mblock[:m, m:] = L.T
        mblock[m:, :m] = L
        mblock[m:, m:] = self.sigma * (S.T @ S)
        # Guard: the middle matrix must be invertible for a valid operator.
        try:
            np.linalg.solve(mblock, np.eye(2 * m))
        except np.linalg.LinAlgError:
            self.s_list.pop(0)
            self.y_list.pop(0)
            self._build()
            return
        self._compact = (psi, mblock)

    def operator(self) -> BOperator:
        if self._compact is None:
            return BOperator(self.sigma, None, None)
        return BOperator(self.sigma, self._compact[0], self._compact[1])

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.operator().matvec(v)

    def update(self, s: np.ndarray, y: np.ndarray):
        sn = float(np.linalg.norm(s))
        if sn < 1e-14:
            return
        bs = self.matvec(s)
        sbs = float(s @ bs)
        sty = float(s @ y)
        # Powell damping keeps the approximation positive definite.
        if sty < 0.2 * sbs:
            theta = 0.8 * sbs / max(sbs - sty, 1e-300)
            y = theta * y + (1.0 - theta) * bs
            sty = float(s @ y)
        if sty <= 1e-12 * sn * float(np.linalg.norm(y)):
            return
        self.s_list.append(s.copy())
        self.y_list.append(y.copy())
        if len(self.s_list) > self.memory:
            self.s_list.pop(0)
            self.y_list.pop(0)
        self.sigma = float(y @ y) / sty
        self.sigma = min(max(self.sigma, 1e-6), 1e8)
        self._build()


@dataclass
class SqpState:
    """Internal result of the SQP loop, consumed by solve_nlp."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    objective: float
    stationarity: float
    cv: float
    compl: float
    iterations: int
    wall_time: float
    converged: bool
    acceptable: bool
    hit_iteration_limit: bool
    infeasible_detected: bool
    failed: bool


def _violation(ce: np.ndarray, ci: np.ndarray) -> float:
    v = 0.0
    if ce.size:
        v += float(np.sum(np.abs(ce)))
    if ci.size:
        v += float(np.sum(np.maximum(ci, 0.0)))
    return v


def _max_violation(ce: np.ndarray, ci: np.ndarray) -> float:
    out = 0.0
    if ce.size:
        out = max(out, float(np.max(np.abs(ce))))
    if ci.size:
        out = max(out, float(np.max(ci.clip(min=0.0))))
    return out


def _stationarity(x, g, je, ci_jac, y, z, lb, ub) -> float:
    grad_l = g.copy()
    if y.size:
        grad_l += je.T @ y
    if z.size:
        grad_l += ci_jac.T @ z
    at_lb = x <= lb + 1e-9
    at_ub = x >= ub - 1e-9
    viol = np.abs(grad_l)
    viol[at_lb] = np.maximum(0.0, -grad_l[at_lb])
    viol[at_ub & ~at_lb] = np.maximum(0.0, grad_l[at_ub & ~at_lb])
    return float(np.max(viol)) if viol.size else 0.0


def _elastic(je, ce, ji, ci, g, n, rho):
    """Elastic reformulation: slacks absorb any inconsistency of the model."""
    me, mi = ce.shape[0], ci.shape[0]
    ne = n + 2 * me + mi
    g_ext = np.concatenate([g, np.full(2 * me + mi, rho)])
    blocks_e = [je, -sp.eye(me, format="csr"), sp.eye(me, format="csr")]
    je_ext = sp.hstack(blocks_e + [sp.csr_matrix((me, mi))], format="csr") if me else sp.csr_matrix((0, ne))
    if mi:
        ji_ext = sp.hstack(
            [ji, sp.csr_matrix((mi, 2 * me)), -sp.eye(mi, format="csr")], format="csr"
        )
    else:
        ji_ext = sp.csr_matrix((0, ne))
    return g_ext, je_ext, ji_ext


def run_sqp(
    n: int,
    objective,
    eq,
    ineq,
    lb: np.ndarray,
    ub: np.ndarray,
    x0: np.ndarray,
    *,
    tol: float,
    a_tol: float,
    cv_tol: float,
    acv_tol: float,
    c_tol: float,
    ac_tol: float,
    d_tol: float,
    ad_tol: float,
    max_iterations: int,
    max_seconds: float,
) -> SqpState:
    """Core loop.  `objective(x) -> (f, g)`, `eq/ineq(x) -> (vals, csr jac)`.

    Constraint values and Jacobians are assumed pre-scaled by the caller.
    """
    t0 = time.perf_counter()
    x = np.clip(x0.astype(float), lb, ub)

    f, g = objective(x)
    ce, je = eq(x)
    ci, ji = ineq(x)
    me, mi = ce.shape[0], ci.shape[0]
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective callback produced a non-finite value at x0")

    hess = _LbfgsHessian(n)
    y = np.zeros(me)
    z = np.zeros(mi)
    pi = 1.0
    acceptable_run = 0
    stall = 0
    qp_infeasible_runs = 0
    elastic_stagnation = 0
    best = None

    it = 0
    status = dict(
        converged=False,
        acceptable=False,
        hit_iteration_limit=False,
        infeasible_detected=False,
        failed=False,
    )

    for it in range(1, max_iterations + 1):
        stat = _stationarity(x, g, je, ji, y, z, lb, ub)
        cv = _max_violation(ce, ci)
        compl = float(np.max(np.abs(z * ci))) if mi else 0.0
        err = max(stat, cv, compl)
        if best is None or (cv, f) < (best[0], best[1]):
            best = (cv, f, x.copy(), y.copy(), z.copy(), stat, compl)

        if err <= tol and cv <= cv_tol and compl <= c_tol and stat <= d_tol:
            status["converged"] = True
            break
        if err <= a_tol and cv <= acv_tol and compl <= ac_tol and stat <= ad_tol:
            acceptable_run += 1
            if acceptable_run >= 15:
                status["acceptable"] = True
                break
        else:
            acceptable_run = 0
        if time.perf_counter() - t0 > max_seconds:
            status["hit_iteration_limit"] = True
            break

        b_op = hess.operator()
        qp_tol = min(1e-8, max(1e-10, 1e-3 * err**2))
        res = solve_qp(b_op, g, je, ce, ji, ci, lb - x, ub - x, tol=qp_tol)
        used_elastic = False
        if res.status in ("infeasible", "failed") or (
            res.status == "max_iter" and res.pr_inf > 1e-5 * (1.0 + cv)
        ):
            rho_el = 10.0 * max(pi, 1.0)
            g_ext, je_ext, ji_ext = _elastic(je, ce, ji, ci, g, n, rho_el)
            ne = g_ext.shape[0]
            lb_ext = np.concatenate([lb - x, np.zeros(ne - n)])
            ub_ext = np.concatenate([ub - x, np.full(ne - n, np.inf)])
            b_ext = BOperator(b_op.sigma, _pad_psi(b_op.psi, ne), b_op.mblock)
            res = solve_qp(b_ext, g_ext, je_ext, ce, ji_ext, ci, lb_ext, ub_ext, tol=qp_tol)
            used_elastic = True
            if res.status in ("infeasible", "failed"):
                qp_infeasible_runs += 1
                if qp_infeasible_runs >= 3:
                    status["infeasible_detected"] = cv > 10.0 * cv_tol
                    status["failed"] = not status["infeasible_detected"]
                    break
                hess.reset()
                continue
        qp_infeasible_runs = 0
        d = res.d[:n]
        y_qp = res.y
        z_qp = res.z

        dnorm = float(np.max(np.abs(d))) if d.size else 0.0
        if dnorm < 1e-16 and cv <= cv_tol:
            # Model step vanished at a feasible point; treat as stationary.
            y, z = y_qp, z_qp
            stat2 = _stationarity(x, g, je, ji, y, z, lb, ub)
            compl2 = float(np.max(np.abs(z * ci))) if mi else 0.0
            status["converged"] = stat2 <= max(tol, d_tol) and compl2 <= c_tol
            status["hit_iteration_limit"] = not status["converged"]
            break

        # l1 penalty weight: dominate the QP multipliers, cover model descent.
        mult_inf = max(
            float(np.max(np.abs(y_qp))) if me else 0.0,
            float(np.max(z_qp)) if mi else 0.0,
        )
        theta = _violation(ce, ci)
        gd = float(g @ d)
        if theta > 1e-14:
            needed = (gd + 0.5 * b_op.quad(d)) / (0.5 * theta)
            pi = max(pi, 1.2 * mult_inf + 1e-3, needed)
        else:
            pi = max(pi, 1.2 * mult_inf + 1e-3)
        pi = min(pi, 1e12)

        phi0 = f + pi * theta
        dphi = gd - pi * theta
        alpha = 1.0
        accepted = False
        watchdog = stall >= 2
        while alpha >= _ALPHA_MIN:
            xt = np.clip(x + alpha * d, lb, ub)
            try:
                ft, gt = objective(xt)
                cet, jet = eq(xt)
                cit, jit = ineq(xt)
            except FloatingPointError:
                alpha *= 0.5
                continue
            if not np.isfinite(ft) or not np.all(np.isfinite(gt)):
                alpha *= 0.5
                continue
            phit = ft + pi * _violation(cet, cit)
            if phit <= phi0 + _ACCEPT_C1 * alpha * dphi or (watchdog and alpha == 1.0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            stall += 1
            hess.reset()
            if stall >= 5:
                status["failed"] = cv > cv_tol
                status["hit_iteration_limit"] = not status["failed"]
                break
            continue
        stall = 0 if alpha > 1e-8 else stall + 1

        # Damped BFGS update on the Lagrangian gradient difference.
        grad_l_old = g.copy()
        if me:
            grad_l_old += je.T @ y_qp
        if mi:
            grad_l_old += ji.T @ z_qp
        grad_l_new = gt.copy()
        if me:
            grad_l_new += jet.T @ y_qp
        if mi:
            grad_l_new += jit.T @ z_qp
        hess.update(xt - x, grad_l_new - grad_l_old)

        theta_new = _violation(cet, cit)
        if used_elastic and theta > 10.0 * cv_tol and theta_new > 0.999 * theta:
            elastic_stagnation += 1
            if elastic_stagnation >= 5:
                status["infeasible_detected"] = True
                x, f, g, ce, ci = xt, ft, gt, cet, cit
                break
        else:
            elastic_stagnation = 0

        x, f, g, ce, je, ci, ji = xt, ft, gt, cet, jet, cit, jit
        y, z = y_qp, z_qp
    else:
        status["hit_iteration_limit"] = True

    stat = _stationarity(x, g, je, ji, y, z, lb, ub)
    cv = _max_violation(ce, ci)
    compl = float(np.max(np.abs(z * ci))) if mi else 0.0
    if not (status["converged"] or status["acceptable"]) and best is not None and best[0] < cv - 1e-12:
        cv, f, x, y, z, stat, compl = best
    return SqpState(
        x=x,
        y=y,
        z=z,
        objective=f,
        stationarity=stat,
        cv=cv,
        compl=compl,
        iterations=it,
        wall_time=time.perf_counter() - t0,
        converged=status["converged"],
        acceptable=status["acceptable"],
        hit_iteration_limit=status["hit_iteration_limit"],
        infeasible_detected=status["infeasible_detected"],
        failed=status["failed"],
    )


def _pad_psi(psi: np.ndarray | None, ne: int) -> np.ndarray | None:
    if psi is None:
        return None
    out = np.zeros((ne, psi.shape[1]))
    out[: psi.shape[0], :] = psi
    return out
