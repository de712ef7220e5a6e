"""Convex QP subproblem solver: primal-dual interior point, Mehrotra style.

Solves
    min 1/2 d'Bd + g'd
    s.t. Je d + ce = 0,  Ji d + ci <= 0,  l <= d <= u

where B is positive definite and supplied either densely or in compact
quasi-Newton form B = sigma*I - Psi * inv(Mblock) * Psi'.  The KKT solves
exploit sparsity of the constraint Jacobians; the low-rank quasi-Newton
correction enters through a Woodbury update so large problems never
densify B.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["QpResult", "solve_qp", "BOperator"]

_FTB = 0.995  # fraction-to-boundary
_REG = 1e-11
_RATIO_CAP = 1e12  # keeps sigma visible next to barrier weights in the KKT diagonal


@dataclass
class BOperator:
    """B = sigma*I - Psi inv(Mblock) Psi'; Psi may be None (pure sigma*I)."""

    sigma: float
    psi: np.ndarray | None = None
    mblock: np.ndarray | None = None

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.sigma * v
        if self.psi is not None:
            out = out - self.psi @ np.linalg.solve(self.mblock, self.psi.T @ v)
        return out

    def quad(self, v: np.ndarray) -> float:
        return float(v @ self.matvec(v))


@dataclass
class QpResult:
    status: str  # "optimal" | "max_iter" | "infeasible" | "failed"
    d: np.ndarray
    y: np.ndarray
    z: np.ndarray
    wl: np.ndarray
    wu: np.ndarray
    iterations: int
    mu: float
    pr_inf: float
    du_inf: float


class _KktSolver:
    """Factorization of [[Hsp, Je'],[Je, -reg I]] plus Woodbury correction."""

    def __init__(self, hdiag, ji, wi, je, sigma_psi, dense: bool):
        n = hdiag.shape[0]
        me = je.shape[0]
        self.n, self.me = n, me
        psi, mblock = sigma_psi
        if ji.shape[0] > 0:
            hsp = sp.diags(hdiag) + (ji.T.multiply(wi)) @ ji
        else:
            hsp = sp.diags(hdiag)
        if me:
            k = sp.bmat([[hsp, je.T], [je, -_REG * sp.eye(me)]], format="csc")
        else:
            k = sp.csc_matrix(hsp)
        self.dense = dense or (n + me) <= 200
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if self.dense:
                import scipy.linalg as sla

                self._lu = None
                self._sla_lu = sla.lu_factor(k.toarray(), check_finite=False)
            else:
                self._lu = spla.splu(k.tocsc())
        # Woodbury data for the subtracted low-rank quasi-Newton term.
        self._wood = None
        if psi is not None and psi.shape[1] > 0:
            r = psi.shape[1]
            u_ext = np.zeros((n + me, r))
            u_ext[:n, :] = psi
            kinv_u = self._base_solve_mat(u_ext)
            cap = -mblock + u_ext.T @ kinv_u
            self._wood = (u_ext, kinv_u, cap)

    def _base_solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.dense:
            import scipy.linalg as sla

            out = sla.lu_solve(self._sla_lu, rhs, check_finite=False)
        else:
            out = self._lu.solve(rhs)
        if not np.all(np.isfinite(out)):
            raise RuntimeError("singular KKT system")
        return out

    def _base_solve_mat(self, rhs: np.ndarray) -> np.ndarray:
        if self.dense:
            import scipy.linalg as sla

            out = sla.lu_solve(self._sla_lu, rhs, check_finite=False)
        else:
            out = np.column_stack([self._lu.solve(rhs[:, j]) for j in range(rhs.shape[1])])
        if not np.all(np.isfinite(out)):
            raise RuntimeError("singular KKT system")
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = self._base_solve(rhs)
        if self._wood is not None:
            u_ext, kinv_u, cap = self._wood
            x = x - kinv_u @ np.linalg.solve(cap, u_ext.T @ x)
        return x


def _initial_point(n, l, u, fl, fu):
    d = np.zeros(n)
    both = fl & fu
    d[both] = 0.5 * (l[both] + u[both])
    lonly = fl & ~fu
    d[lonly] = np.maximum(0.0, l[lonly] + 1.0)
    uonly = fu & ~fl
    d[uonly] = np.minimum(0.0, u[uonly] - 1.0)
    return d


def solve_qp(
    b_op: BOperator,
    g: np.ndarray,
    je: sp.csr_matrix,
    ce: np.ndarray,
    ji: sp.csr_matrix,
    ci: np.ndarray,
    l: np.ndarray,
    u: np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 60,
) -> QpResult:
    n = g.shape[0]
    me = ce.shape[0]
    mi = ci.shape[0]

    # Fixed variables (pinned bounds) admit no barrier interior; eliminate
    # their columns and substitute the pinned value.
    fixed = (u - l) <= 1e-12
    if np.any(fixed):
        free = ~fixed
        d_fix = np.clip(0.0, l, u)
        ce_red = ce + (je @ (d_fix * fixed)) if me else ce
        ci_red = ci + (ji @ (d_fix * fixed)) if mi else ci
        psi_red = b_op.psi[free] if b_op.psi is not None else None
        b_red = BOperator(b_op.sigma, psi_red, b_op.mblock)
        res = solve_qp(
            b_red,
            g[free],
            je[:, free].tocsr() if me else sp.csr_matrix((0, int(free.sum()))),
            ce_red,
            ji[:, free].tocsr() if mi else sp.csr_matrix((0, int(free.sum()))),
            ci_red,
            l[free],
            u[free],
            tol,
            max_iter,
        )
        d_full = d_fix.copy()
        d_full[free] = res.d
        wl_full = np.zeros(n)
        wu_full = np.zeros(n)
        wl_full[free] = res.wl
        wu_full[free] = res.wu
        return QpResult(
            res.status, d_full, res.y, res.z, wl_full, wu_full, res.iterations,
            res.mu, res.pr_inf, res.du_inf,
        )
    fl = np.isfinite(l)
    fu = np.isfinite(u)
    nl, nu = int(fl.sum()), int(fu.sum())

    d = _initial_point(n, l, u, fl, fu)
    s = np.maximum(1.0, -(ji @ d + ci)) if mi else np.zeros(0)
    y = np.zeros(me)
    z = np.ones(mi)
    wl = np.where(fl, 1.0, 0.0)
    wu = np.where(fu, 1.0, 0.0)

    gscale = 1.0 + float(np.max(np.abs(g))) if n else 1.0
    cscale = 1.0 + max(
        float(np.max(np.abs(ce))) if me else 0.0, float(np.max(np.abs(ci))) if mi else 0.0
    )
    n_compl = mi + nl + nu
    best = None

    for it in range(max_iter):
        dl = np.where(fl, d - l, 1.0)
        du = np.where(fu, u - d, 1.0)
        # Keep slacks numerically interior.
        dl = np.maximum(dl, 1e-14)
        du = np.maximum(du, 1e-14)

        rd = b_op.matvec(d) + g - wl + wu
        if me:
            rd += je.T @ y
        if mi:
            rd += ji.T @ z
        re = (je @ d + ce) if me else np.zeros(0)
        ri = (ji @ d + s + ci) if mi else np.zeros(0)

        mu = 0.0
        if n_compl:
            mu = (
                (float(s @ z) if mi else 0.0)
                + float(np.sum(np.where(fl, wl * dl, 0.0)))
                + float(np.sum(np.where(fu, wu * du, 0.0)))
            ) / n_compl

        pr_inf = max(
            float(np.max(np.abs(re))) if me else 0.0,
            float(np.max(np.abs(ri))) if mi else 0.0,
        )
        du_inf = float(np.max(np.abs(rd))) if n else 0.0
        if best is None or (pr_inf + mu) < best[0]:
            best = (pr_inf + mu, d.copy(), y.copy(), z.copy(), wl.copy(), wu.copy(), mu, pr_inf, du_inf)
        if mu <= tol and pr_inf <= tol * cscale and du_inf <= tol * gscale * 10.0:
            return QpResult("optimal", d, y, z, wl, wu, it, mu, pr_inf, du_inf)

        # Reduced-system diagonal and inequality weights, ratio-capped so the
        # quasi-Newton diagonal is never rounded away.
        cap = _RATIO_CAP * max(1.0, b_op.sigma)
        hdiag = np.full(n, b_op.sigma)
        hdiag += np.minimum(np.where(fl, wl / dl, 0.0), cap)
        hdiag += np.minimum(np.where(fu, wu / du, 0.0), cap)
        wi = np.minimum(z / s, cap) if mi else np.zeros(0)
        try:
            kkt = _KktSolver(
                hdiag,
                ji if mi else sp.csr_matrix((0, n)),
                wi,
                je if me else sp.csr_matrix((0, n)),
                (b_op.psi, b_op.mblock),
                dense=False,
            )
        except (RuntimeError, np.linalg.LinAlgError):
            return QpResult("failed", d, y, z, wl, wu, it, mu, pr_inf, du_inf)

        def newton(rcs, rcl, rcu, rd_, re_, ri_):
            """One reduced Newton solve for given complementarity targets."""
            rhs_d = -rd_.copy()
            if mi:
                rhs_d -= ji.T @ ((rcs + z * ri_) / s)
            rhs_d += np.where(fl, rcl / dl, 0.0)
            rhs_d -= np.where(fu, rcu / du, 0.0)
            rhs = np.concatenate([rhs_d, -re_]) if me else rhs_d
            sol = kkt.solve(rhs)
            dd = sol[:n]
            dy = sol[n:] if me else np.zeros(0)
            if mi:
                ds = -ri_ - ji @ dd
                dz = (rcs - z * ds) / s
            else:
                ds = np.zeros(0)
                dz = np.zeros(0)
            dwl = np.where(fl, (rcl - wl * dd) / dl, 0.0)
            dwu = np.where(fu, (rcu + wu * dd) / du, 0.0)
            return dd, dy, ds, dz, dwl, dwu

        def step_lengths(dd, ds, dz, dwl, dwu):
            ap = 1.0
            if mi:
                neg = ds < 0
                if np.any(neg):
                    ap = min(ap, float(np.min(-s[neg] / ds[neg])))
            ndl = fl & (dd < 0)
            if np.any(ndl):
                ap = min(ap, float(np.min(-dl[ndl] / dd[ndl])))
            ndu = fu & (dd > 0)
            if np.any(ndu):
                ap = min(ap, float(np.min(du[ndu] / dd[ndu])))
            ad = 1.0
            if mi:
                neg = dz < 0
                if np.any(neg):
                    ad = min(ad, float(np.min(-z[neg] / dz[neg])))
            nwl = fl & (dwl < 0)
            if np.any(nwl):
                ad = min(ad, float(np.min(-wl[nwl] / dwl[nwl])))
            nwu = fu & (dwu < 0)
            if np.any(nwu):
                ad = min(ad, float(np.min(-wu[nwu] / dwu[nwu])))
            return ap, ad

        # Predictor (affine) step.
        rcs_aff = -(z * s) if mi else np.zeros(0)
        rcl_aff = np.where(fl, -(wl * dl), 0.0)
        rcu_aff = np.where(fu, -(wu * du), 0.0)
        try:
            aff = newton(rcs_aff, rcl_aff, rcu_aff, rd, re, ri)
        except RuntimeError:
            return QpResult("failed", d, y, z, wl, wu, it, mu, pr_inf, du_inf)
        ap_aff, ad_aff = step_lengths(aff[0], aff[2], aff[3], aff[4], aff[5])

        if n_compl:
            mu_aff = (
                (float((s + ap_aff * aff[2]) @ (z + ad_aff * aff[3])) if mi else 0.0)
                + float(
                    np.sum(np.where(fl, (wl + ad_aff * aff[4]) * (dl + ap_aff * aff[0]), 0.0))
                )
                + float(
                    np.sum(np.where(fu, (wu + ad_aff * aff[5]) * (du - ap_aff * aff[0]), 0.0))
                )
            ) / n_compl
            sigma_c = (max(mu_aff, 0.0) / max(mu, 1e-300)) ** 3
            sigma_c = min(max(sigma_c, 1e-8), 0.99)
        else:
            mu_aff, sigma_c = 0.0, 0.0

        # Corrector step with Mehrotra second-order terms.
        tgt = sigma_c * mu
        rcs = (tgt - z * s - aff[3] * aff[2]) if mi else np.zeros(0)
        rcl = np.where(fl, tgt - wl * dl - aff[4] * aff[0], 0.0)
        rcu = np.where(fu, tgt - wu * du + aff[5] * aff[0], 0.0)
        try:
            dd, dy, ds, dz, dwl, dwu = newton(rcs, rcl, rcu, rd, re, ri)
        except RuntimeError:
            return QpResult("failed", d, y, z, wl, wu, it, mu, pr_inf, du_inf)
        ap, ad = step_lengths(dd, ds, dz, dwl, dwu)
        tau = _FTB if mu > 1e-8 else 0.99995
        ap, ad = min(1.0, tau * ap), min(1.0, tau * ad)

        d = d + ap * dd
        if mi:
            s = np.maximum(s + ap * ds, 1e-300)
            z = np.maximum(z + ad * dz, 1e-300)
        y = y + ad * dy
        wl = np.where(fl, np.maximum(wl + ad * dwl, 1e-300), 0.0)
        wu = np.where(fu, np.maximum(wu + ad * dwu, 1e-300), 0.0)

    _, d, y, z, wl, wu, mu, pr_inf, du_inf = best
    status = "max_iter"
    # Primal residual stuck while complementarity collapsed: likely infeasible.
    if pr_inf > 1e-6 * cscale and mu < 1e-9:
        status = "infeasible"
    return QpResult(status, d, y, z, wl, wu, max_iter, mu, pr_inf, du_inf)
