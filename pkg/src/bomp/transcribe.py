"""Transcription of the planning models into sparse NLPs.

Decision vector (all modes): [x(N), y(N), theta(N), alpha(N), v(N), omega(N),
<mode-specific collision variables>, t_f].  Modes:

* ``stage1``   -- relaxed-KKT collision blocks: per obstacle pair and node,
  LP weights p, multipliers lam and v, feasibility rows Qp=b, the margin row
  1+c'p >= eps+delta, the squared stationarity-norm row and the
  complementarity row.
* ``stage2``   -- active-point blocks: per retained (pair, node), the active
  weights with matching rows and the margin 1+c'p >= delta.
* ``ac``       -- triangle-area-ratio rows (8 per pair per node).
* ``circle``   -- overlapping-disc separation rows.

Collision frames follow the vehicle-center convention: the first body is
the footprint rectangle in its own center frame (constant, origin strictly
inside), the second is the obstacle mapped into that frame (state
dependent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import ConvexPolytope, Pose2, transform_points, vehicle_center_rect
from .j2 import ActivePointSet
from .nlp import NlpProblem
from .ocp import CollocationGrid, Trajectory
from .scenario import BompConfig, Scenario

__all__ = [
    "DimensionReport",
    "TranscribedProblem",
    "assemble_stage1",
    "assemble_stage2",
    "assemble_ac",
    "assemble_circle",
]

_AC_SMOOTH = 1e-8  # smoothed |.| half-width keeping area rows differentiable


@dataclass(frozen=True)
class DimensionReport:
    """Problem sizes in the per-node accounting (bounds count as constraints)."""

    variables: int
    equalities: int
    inequalities: int
    bounded_variables: int

    @property
    def constraints(self) -> int:
        return self.equalities + self.inequalities + self.bounded_variables

    def as_dict(self) -> dict:
        return {
            "variables": self.variables,
            "equalities": self.equalities,
            "inequalities": self.inequalities,
            "bounded_variables": self.bounded_variables,
            "constraints": self.constraints,
        }


def _rect_long_axis_centers(poly: np.ndarray, fractions: np.ndarray) -> np.ndarray:
    """Disc centers along a quadrilateral's long centerline."""
    if poly.shape[0] != 4:
        raise ValueError("disc approximation expects quadrilateral obstacles")
    e01 = np.linalg.norm(poly[1] - poly[0])
    e12 = np.linalg.norm(poly[2] - poly[1])
    if e01 >= e12:
        m1 = (poly[0] + poly[3]) / 2.0
        m2 = (poly[1] + poly[2]) / 2.0
    else:
        m1 = (poly[1] + poly[0]) / 2.0
        m2 = (poly[2] + poly[3]) / 2.0
    return m1[None, :] + fractions[:, None] * (m2 - m1)[None, :]


class TranscribedProblem:
    """A built NLP plus the layout needed to pack/unpack trajectories."""

    def __init__(
        self,
        scenario: Scenario,
        config: BompConfig,
        grid: CollocationGrid,
        mode: str,
        eps: float = 0.0,
        active_map: dict[tuple[int, int], ActivePointSet] | None = None,
        circle_radius: float | None = None,
        n_circles: int | None = None,
        ac_subset: list[tuple[int, int]] | None = None,
    ):
        if mode not in ("stage1", "stage2", "ac", "circle"):
            raise ValueError(f"unknown mode {mode!r}")
        self.scenario = scenario
        self.config = config
        self.grid = grid
        self.mode = mode
        self.eps = float(eps)
        self.n = grid.n_nodes
        self.n_pairs = scenario.n_obstacles
        veh = scenario.vehicle
        self.wheel_base = veh.wheel_base
        self.center_offset = veh.center_offset
        self.a_veh = vehicle_center_rect(veh).points.T  # 2 x 4, columns = corners
        self.obstacle_world = [p.points.T for p in scenario.obstacle_world_polygons()]  # 2 x ni

        n = self.n
        self.off_x, self.off_y = 0, n
        self.off_th, self.off_al = 2 * n, 3 * n
        self.off_v, self.off_om = 4 * n, 5 * n
        base = 6 * n

        self.active_items: list[tuple[tuple[int, int], ActivePointSet]] = []
        if mode == "stage1":
            self.off_pair = []
            for j in range(self.n_pairs):
                self.off_pair.append(base + j * 19 * n)
            base += 19 * n * self.n_pairs
        elif mode == "stage2":
            items = sorted((active_map or {}).items(), key=lambda kv: kv[0])
            self.active_items = items
            self.block_off = []
            for (_pair, _node), aps in items:
                self.block_off.append(base)
                base += len(aps.a_indices) + len(aps.b_indices)
        elif mode == "ac":
            if ac_subset is None:
                self.ac_items = [(j, k) for j in range(self.n_pairs) for k in range(n)]
            else:
                self.ac_items = sorted(ac_subset)
        elif mode == "circle":
            self.circle_radius = float(circle_radius if circle_radius is not None else config.circle_radius)
            self.n_circles = int(n_circles if n_circles is not None else config.n_circles)
            fr = (np.arange(self.n_circles) + 0.5) / self.n_circles if self.n_circles != 3 else np.array(
                [1.0 / 6.0, 0.5, 5.0 / 6.0]
            )
            lo = -veh.rear_overhang
            self.veh_circle_x = lo + fr * veh.length  # local x of footprint disc centers
            self.obs_circle_centers = [
                _rect_long_axis_centers(p.T, fr) for p in self.obstacle_world
            ]
        self.off_tf = base
        self.n_vars = base + 1

        self._build_bounds()
        self._build_structure()

    # ------------------------------------------------------------------ bounds
    def _build_bounds(self):
        sc, cfg = self.scenario, self.config
        n = self.n
        lb = np.full(self.n_vars, -np.inf)
        ub = np.full(self.n_vars, np.inf)
        lb[self.off_x : self.off_x + n] = -cfg.xy_box
        ub[self.off_x : self.off_x + n] = cfg.xy_box
        lb[self.off_y : self.off_y + n] = -cfg.xy_box
        ub[self.off_y : self.off_y + n] = cfg.xy_box
        lb[self.off_th : self.off_th + n] = -cfg.theta_box
        ub[self.off_th : self.off_th + n] = cfg.theta_box
        lb[self.off_al : self.off_al + n] = -sc.bounds.alpha_max
        ub[self.off_al : self.off_al + n] = sc.bounds.alpha_max
        lb[self.off_v : self.off_v + n] = -sc.bounds.v_max
        ub[self.off_v : self.off_v + n] = sc.bounds.v_max
        # Standstill at both trajectory ends, enforced exactly as bounds.
        lb[self.off_v] = ub[self.off_v] = 0.0
        lb[self.off_v + n - 1] = ub[self.off_v + n - 1] = 0.0
        lb[self.off_om : self.off_om + n] = -sc.bounds.omega_max
        ub[self.off_om : self.off_om + n] = sc.bounds.omega_max
        if self.mode == "stage1":
            for j in range(self.n_pairs):
                o = self.off_pair[j]
                lb[o : o + 8 * n] = 0.0  # p >= 0
                lb[o + 8 * n : o + 16 * n] = 0.0  # lam >= 0
        elif self.mode == "stage2":
            for off, ((_pj, _nk), aps) in zip(self.block_off, self.active_items):
                nw = len(aps.a_indices) + len(aps.b_indices)
                lb[off : off + nw] = 0.0
        lb[self.off_tf] = cfg.t_f_min
        ub[self.off_tf] = cfg.t_f_max
        self.lower, self.upper = lb, ub

    # --------------------------------------------------------------- structure
    def _build_structure(self):
        """Row layout and fixed Jacobian sparsity patterns."""
        n, npair = self.n, self.n_pairs
        mode = self.mode
        self.has_goal = self.scenario.goal_pose is not None

        self.n_eq = 4 * n + 3 + (3 if self.has_goal else 0)
        if mode == "stage1":
            self.n_eq += 3 * npair * n
        elif mode == "stage2":
            self.n_eq += 3 * len(self.active_items)

        self.n_ineq = 0 if self.has_goal else 5
        if mode == "stage1":
            self.n_ineq += 3 * npair * n
        elif mode == "stage2":
            self.n_ineq += len(self.active_items)
        elif mode == "ac":
            self.n_ineq += 8 * len(self.ac_items)
        elif mode == "circle":
            self.n_ineq += self.n_circles * self.n_circles * npair * n

        bounded = 6 * n + 1
        if mode == "stage1":
            bounded += 16 * npair * n
        elif mode == "stage2":
            bounded += sum(len(a.a_indices) + len(a.b_indices) for _k, a in self.active_items)
        self.dimensions = DimensionReport(self.n_vars, self.n_eq, self.n_ineq, bounded)

        # Equality pattern: collocation rows carry a dense node-coupling block
        # per state plus the dynamics couplings and the t_f column.
        D = self.grid.diff
        rows, cols, base_vals = [], [], []
        for s, off_s in enumerate((self.off_x, self.off_y, self.off_th, self.off_al)):
            for k in range(n):
                r = s * n + k
                rows.extend([r] * n)
                cols.extend(range(off_s, off_s + n))
                base_vals.extend(D[:, k])
        self._eq_coll_const = (
            np.array(rows, dtype=np.int64),
            np.array(cols, dtype=np.int64),
            np.array(base_vals),
        )
        # Dynamic entries appended per evaluation; only patterns cached here.
        dyn_rows, dyn_cols = [], []
        for k in range(n):  # xdot rows: theta, v
            dyn_rows += [0 * n + k, 0 * n + k]
            dyn_cols += [self.off_th + k, self.off_v + k]
        for k in range(n):  # ydot rows
            dyn_rows += [1 * n + k, 1 * n + k]
            dyn_cols += [self.off_th + k, self.off_v + k]
        for k in range(n):  # thetadot rows: alpha, v
            dyn_rows += [2 * n + k, 2 * n + k]
            dyn_cols += [self.off_al + k, self.off_v + k]
        for k in range(n):  # alphadot rows: omega
            dyn_rows += [3 * n + k]
            dyn_cols += [self.off_om + k]
        for s in range(4):  # t_f column
            for k in range(n):
                dyn_rows.append(s * n + k)
                dyn_cols.append(self.off_tf)
        self._eq_dyn_pattern = (np.array(dyn_rows, dtype=np.int64), np.array(dyn_cols, dtype=np.int64))

        r0 = 4 * n
        bc_rows = [r0, r0 + 1, r0 + 2]
        bc_cols = [self.off_x, self.off_y, self.off_th]
        if self.has_goal:
            bc_rows += [r0 + 3, r0 + 4, r0 + 5]
            bc_cols += [self.off_x + n - 1, self.off_y + n - 1, self.off_th + n - 1]
        self._eq_bc_pattern = (np.array(bc_rows, dtype=np.int64), np.array(bc_cols, dtype=np.int64))
        self._eq_mj_row0 = r0 + len(bc_rows)

        if mode == "stage1":
            rows, cols = [], []
            for j in range(npair):
                op = self.off_pair[j]
                for k in range(n):
                    rr = self._eq_mj_row0 + j * 3 * n + 3 * k
                    pk = op + 8 * k
                    for d2 in range(2):  # point-match rows
                        rows += [rr + d2] * 11
                        cols += list(range(pk, pk + 8)) + [
                            self.off_x + k,
                            self.off_y + k,
                            self.off_th + k,
                        ]
                    rows += [rr + 2] * 4  # unit-sum row
                    cols += list(range(pk, pk + 4))
            self._eq_mj_pattern = (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))
        elif mode == "stage2":
            rows, cols = [], []
            for bi, ((pj, nk), aps) in enumerate(self.active_items):
                rr = self._eq_mj_row0 + 3 * bi
                off = self.block_off[bi]
                na, nb = len(aps.a_indices), len(aps.b_indices)
                for d2 in range(2):
                    rows += [rr + d2] * (na + nb + 3)
                    cols += list(range(off, off + na + nb)) + [
                        self.off_x + nk,
                        self.off_y + nk,
                        self.off_th + nk,
                    ]
                rows += [rr + 2] * na
                cols += list(range(off, off + na))
            self._eq_mj_pattern = (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))

        # Inequality patterns.
        rows, cols = [], []
        self._term_row0 = 0
        nrow = 0
        if not self.has_goal:
            kK = n - 1
            rows += [0]
            cols += [self.off_th + kK]
            for r in range(1, 5):
                rows += [r, r, r]
                cols += [self.off_x + kK, self.off_y + kK, self.off_th + kK]
            nrow = 5
        self._in_block_row0 = nrow
        if mode == "stage1":
            for j in range(npair):
                op = self.off_pair[j]
                for k in range(n):
                    rr = nrow + (j * n + k) * 3
                    pk, lk, vk = op + 8 * k, op + 8 * n + 8 * k, op + 16 * n + 3 * k
                    rows += [rr] * 4  # margin row: y-weights
                    cols += list(range(pk + 4, pk + 8))
                    rows += [rr + 1] * 14  # squared stationarity norm
                    cols += (
                        list(range(lk, lk + 8))
                        + list(range(vk, vk + 3))
                        + [self.off_x + k, self.off_y + k, self.off_th + k]
                    )
                    rows += [rr + 2] * 16  # complementarity
                    cols += list(range(pk, pk + 8)) + list(range(lk, lk + 8))
        elif mode == "stage2":
            for bi, ((pj, nk), aps) in enumerate(self.active_items):
                off = self.block_off[bi]
                na, nb = len(aps.a_indices), len(aps.b_indices)
                rows += [nrow + bi] * nb
                cols += list(range(off + na, off + na + nb))
        elif mode == "ac":
            for bi, (_j, k) in enumerate(self.ac_items):
                for c in range(8):
                    rr = nrow + bi * 8 + c
                    rows += [rr] * 3
                    cols += [self.off_x + k, self.off_y + k, self.off_th + k]
        elif mode == "circle":
            nc = self.n_circles
            for j in range(npair):
                for k in range(n):
                    for c in range(nc * nc):
                        rr = nrow + (j * n + k) * nc * nc + c
                        rows += [rr] * 3
                        cols += [self.off_x + k, self.off_y + k, self.off_th + k]
        self._in_pattern = (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))

    # ------------------------------------------------------------- evaluation
    def _split(self, z: np.ndarray):
        n = self.n
        return (
            z[self.off_x : self.off_x + n],
            z[self.off_y : self.off_y + n],
            z[self.off_th : self.off_th + n],
            z[self.off_al : self.off_al + n],
            z[self.off_v : self.off_v + n],
            z[self.off_om : self.off_om + n],
            float(z[self.off_tf]),
        )

    def objective(self, z: np.ndarray):
        _x, _y, _th, _al, v, _om, tf = self._split(z)
        w = self.grid.weights
        f = tf + (tf / 2.0) * float(np.sum(w * v * v))
        g = np.zeros(self.n_vars)
        g[self.off_v : self.off_v + self.n] = tf * w * v
        g[self.off_tf] = 1.0 + 0.5 * float(np.sum(w * v * v))
        return f, g

    def _obstacle_in_vehicle_frame(self, j: int, x, y, th):
        """Columns of the second body per node plus shared trig terms.

        Returns (bmat, c, s, wx_rel, wy_rel) with bmat shaped (n, 2, ni).
        """
        w = self.obstacle_world[j]  # 2 x ni
        c, s = np.cos(th), np.sin(th)
        tx = x + self.center_offset * c
        ty = y + self.center_offset * s
        relx = w[0][None, :] - tx[:, None]  # (n, ni)
        rely = w[1][None, :] - ty[:, None]
        bx = c[:, None] * relx + s[:, None] * rely
        by = -s[:, None] * relx + c[:, None] * rely
        return bx, by, c, s

    def eval_eq(self, z: np.ndarray):
        n = self.n
        x, y, th, al, v, om, tf = self._split(z)
        c, s = np.cos(th), np.sin(th)
        tanal = np.tan(al)

        f_dyn = np.stack([v * c, v * s, v * tanal / self.wheel_base, om])  # 4 x n
        states = np.stack([x, y, th, al])  # 4 x n
        coll = (states @ self.grid.diff) - (tf / 2.0) * f_dyn
        vals = [coll.ravel()]

        sc = self.scenario
        bc = [x[0] - sc.initial_pose.x, y[0] - sc.initial_pose.y, th[0] - sc.initial_pose.theta]
        if self.has_goal:
            gp = sc.goal_pose
            bc += [x[-1] - gp.x, y[-1] - gp.y, th[-1] - gp.theta]
        vals.append(np.array(bc))

        # Jacobian values, in pattern order.
        dyn_vals = []
        half = tf / 2.0
        dyn_vals.append(np.stack([half * v * s, -half * c], axis=1).ravel())  # xdot rows
        dyn_vals.append(np.stack([-half * v * c, -half * s], axis=1).ravel())  # ydot rows
        sec2 = 1.0 + tanal * tanal
        dyn_vals.append(
            np.stack(
                [-half * v * sec2 / self.wheel_base, -half * tanal / self.wheel_base], axis=1
            ).ravel()
        )
        dyn_vals.append(np.full(n, -half))  # alphadot rows: omega
        dyn_vals.append((-f_dyn / 2.0).ravel())  # t_f column
        jac_vals = [self._eq_coll_const[2], np.concatenate(dyn_vals)]
        jac_vals.append(np.ones(len(self._eq_bc_pattern[0])))

        if self.mode == "stage1":
            mj_vals, mj_res = self._stage1_eq(z, x, y, th, c, s)
            vals.append(mj_res)
            jac_vals.append(mj_vals)
        elif self.mode == "stage2":
            mj_vals, mj_res = self._stage2_eq(z, x, y, th, c, s)
            vals.append(mj_res)
            jac_vals.append(mj_vals)

        rows = np.concatenate(
            [self._eq_coll_const[0], self._eq_dyn_pattern[0], self._eq_bc_pattern[0]]
            + ([self._eq_mj_pattern[0]] if self.mode in ("stage1", "stage2") else [])
        )
        cols = np.concatenate(
            [self._eq_coll_const[1], self._eq_dyn_pattern[1], self._eq_bc_pattern[1]]
            + ([self._eq_mj_pattern[1]] if self.mode in ("stage1", "stage2") else [])
        )
        jac = sp.csr_matrix(
            (np.concatenate(jac_vals), (rows, cols)), shape=(self.n_eq, self.n_vars)
        )
        return np.concatenate(vals), jac

    def _stage1_eq(self, z, x, y, th, c, s):
        n, d = self.n, self.center_offset
        res = np.zeros(3 * self.n_pairs * n)
        vals = np.zeros(len(self._eq_mj_pattern[0]))
        pos = 0
        for j in range(self.n_pairs):
            op = self.off_pair[j]
            p = z[op : op + 8 * n].reshape(n, 8)
            xw, yw = p[:, :4], p[:, 4:]
            bx, by, _c, _s = self._obstacle_in_vehicle_frame(j, x, y, th)
            ax_w = xw @ self.a_veh[0]  # (n,)
            ay_w = xw @ self.a_veh[1]
            bxy = np.einsum("ni,ni->n", bx, yw)
            byy = np.einsum("ni,ni->n", by, yw)
            sig_y = yw.sum(axis=1)
            g1x = ax_w - bxy
            g1y = ay_w - byy
            g2 = xw.sum(axis=1) - 1.0
            block = np.stack([g1x, g1y, g2], axis=1).ravel()
            res[j * 3 * n : (j + 1) * 3 * n] = block
            for k in range(n):
                # row g1x: xw(4): A_veh[0]; yw(4): -bx[k]; x,y,theta
                vals[pos : pos + 4] = self.a_veh[0]
                vals[pos + 4 : pos + 8] = -bx[k]
                vals[pos + 8] = c[k] * sig_y[k]
                vals[pos + 9] = s[k] * sig_y[k]
                vals[pos + 10] = -byy[k]
                pos += 11
                vals[pos : pos + 4] = self.a_veh[1]
                vals[pos + 4 : pos + 8] = -by[k]
                vals[pos + 8] = -s[k] * sig_y[k]
                vals[pos + 9] = c[k] * sig_y[k]
                vals[pos + 10] = bxy[k] + d * sig_y[k]
                pos += 11
                vals[pos : pos + 4] = 1.0
                pos += 4
        return vals, res

    def _stage2_eq(self, z, x, y, th, c, s):
        d = self.center_offset
        res = np.zeros(3 * len(self.active_items))
        vals = np.zeros(len(self._eq_mj_pattern[0]))
        pos = 0
        for bi, ((pj, nk), aps) in enumerate(self.active_items):
            off = self.block_off[bi]
            na, nb = len(aps.a_indices), len(aps.b_indices)
            xw = z[off : off + na]
            yw = z[off + na : off + na + nb]
            aa = self.a_veh[:, list(aps.a_indices)]  # 2 x na
            wobs = self.obstacle_world[pj][:, list(aps.b_indices)]  # 2 x nb
            ck, sk = c[nk], s[nk]
            tx = x[nk] + d * ck
            ty = y[nk] + d * sk
            relx = wobs[0] - tx
            rely = wobs[1] - ty
            bxv = ck * relx + sk * rely  # (nb,)
            byv = -sk * relx + ck * rely
            sig_y = float(np.sum(yw))
            bxy = float(bxv @ yw)
            byy = float(byv @ yw)
            g1x = float(aa[0] @ xw) - bxy
            g1y = float(aa[1] @ xw) - byy
            res[3 * bi : 3 * bi + 3] = (g1x, g1y, float(np.sum(xw)) - 1.0)
            vals[pos : pos + na] = aa[0]
            vals[pos + na : pos + na + nb] = -bxv
            vals[pos + na + nb] = ck * sig_y
            vals[pos + na + nb + 1] = sk * sig_y
            vals[pos + na + nb + 2] = -byy
            pos += na + nb + 3
            vals[pos : pos + na] = aa[1]
            vals[pos + na : pos + na + nb] = -byv
            vals[pos + na + nb] = -sk * sig_y
            vals[pos + na + nb + 1] = ck * sig_y
            vals[pos + na + nb + 2] = bxy + d * sig_y
            pos += na + nb + 3
            vals[pos : pos + na] = 1.0
            pos += na
        return vals, res

    def eval_ineq(self, z: np.ndarray):
        n = self.n
        x, y, th, al, v, om, tf = self._split(z)
        res_parts = []
        val_parts = []

        if not self.has_goal:
            res_t, vals_t = self._terminal(x, y, th)
            res_parts.append(res_t)
            val_parts.append(vals_t)

        if self.mode == "stage1":
            res_b, vals_b = self._stage1_ineq(z, x, y, th)
        elif self.mode == "stage2":
            res_b, vals_b = self._stage2_ineq(z)
        elif self.mode == "ac":
            res_b, vals_b = self._ac_ineq(x, y, th)
        else:
            res_b, vals_b = self._circle_ineq(x, y, th)
        res_parts.append(res_b)
        val_parts.append(vals_b)

        res = np.concatenate(res_parts) if res_parts else np.zeros(0)
        vals = np.concatenate(val_parts) if val_parts else np.zeros(0)
        jac = sp.csr_matrix(
            (vals, self._in_pattern), shape=(self.n_ineq, self.n_vars)
        )
        return res, jac

    def _terminal(self, x, y, th):
        """Squared two-sided windows of the parking terminal set.

        Expressed in the spot frame; gradients chain through the constant
        spot rotation.
        """
        veh, b = self.scenario.vehicle, self.scenario.bounds
        xf = veh.front_overhang + veh.wheel_base
        xr = -veh.rear_overhang
        hw = veh.width / 2.0
        eps_t = b.eps_theta - self.config.terminal_margin
        eps_p = b.eps_p - self.config.terminal_margin
        xk, yk, tk = x[-1], y[-1], th[-1]
        sp = self.scenario.spot_pose
        if sp is not None:
            cs, ss = math.cos(sp.theta), math.sin(sp.theta)
            dx, dy = xk - sp.x, yk - sp.y
            xk, yk = cs * dx + ss * dy, -ss * dx + cs * dy
            tk = tk - sp.theta
        else:
            cs, ss = 1.0, 0.0
        ck, sk = math.cos(tk), math.sin(tk)
        mid = (xf + xr) / 2.0
        m1 = yk + xf * sk - b.spot_width / 2.0
        m2 = yk + xr * sk - b.spot_width / 2.0
        m3 = xk + mid * ck - hw * sk - b.spot_length / 2.0
        m4 = xk + mid * ck + hw * sk - b.spot_length / 2.0
        res = np.array(
            [
                tk * tk - eps_t * eps_t,
                m1 * m1 - eps_p * eps_p,
                m2 * m2 - eps_p * eps_p,
                m3 * m3 - eps_p * eps_p,
                m4 * m4 - eps_p * eps_p,
            ]
        )
        # d(x_spot)/d(x, y) = (cs, ss); d(y_spot)/d(x, y) = (-ss, cs).
        dm1 = (-ss, cs, xf * ck)
        dm2 = (-ss, cs, xr * ck)
        dm3 = (cs, ss, -mid * sk - hw * ck)
        dm4 = (cs, ss, -mid * sk + hw * ck)
        vals = np.array(
            [
                2.0 * tk,
                2.0 * m1 * dm1[0],
                2.0 * m1 * dm1[1],
                2.0 * m1 * dm1[2],
                2.0 * m2 * dm2[0],
                2.0 * m2 * dm2[1],
                2.0 * m2 * dm2[2],
                2.0 * m3 * dm3[0],
                2.0 * m3 * dm3[1],
                2.0 * m3 * dm3[2],
                2.0 * m4 * dm4[0],
                2.0 * m4 * dm4[1],
                2.0 * m4 * dm4[2],
            ]
        )
        return res, vals

    def _stage1_ineq(self, z, x, y, th):
        n, d = self.n, self.center_offset
        eps = self.eps
        delta = self.config.delta
        res = np.zeros(3 * self.n_pairs * n)
        vals = np.zeros(34 * self.n_pairs * n)
        c, s = np.cos(th), np.sin(th)
        pos = 0
        ri = 0
        for j in range(self.n_pairs):
            op = self.off_pair[j]
            p = z[op : op + 8 * n].reshape(n, 8)
            lam = z[op + 8 * n : op + 16 * n].reshape(n, 8)
            vm = z[op + 16 * n : op + 19 * n].reshape(n, 3)
            bx, by, _c, _s = self._obstacle_in_vehicle_frame(j, x, y, th)
            yw = p[:, 4:]
            # Stationarity vector sv = c_lp - lam + Q' vm, assembled per node.
            sv_x = -lam[:, :4] + (vm[:, :2] @ self.a_veh) + vm[:, 2:3]  # (n, 4)
            bv = bx * vm[:, 0:1] + by * vm[:, 1:2]  # (n, 4): B' vm12
            sv_y = -1.0 - lam[:, 4:] - bv
            for k in range(n):
                res[ri] = (eps + delta) - (1.0 - float(np.sum(yw[k])))
                vals[pos : pos + 4] = 1.0
                pos += 4
                svx, svy = sv_x[k], sv_y[k]
                res[ri + 1] = float(svx @ svx + svy @ svy) - eps
                vals[pos : pos + 4] = -2.0 * svx
                vals[pos + 4 : pos + 8] = -2.0 * svy
                vals[pos + 8] = 2.0 * float(
                    self.a_veh[0] @ svx - bx[k] @ svy
                )
                vals[pos + 9] = 2.0 * float(self.a_veh[1] @ svx - by[k] @ svy)
                vals[pos + 10] = 2.0 * float(np.sum(svx))
                # state couplings via the obstacle columns
                vm1, vm2 = vm[k, 0], vm[k, 1]
                dsv_dx = c[k] * vm1 - s[k] * vm2
                dsv_dy = s[k] * vm1 + c[k] * vm2
                dsv_dth = -by[k] * vm1 + (bx[k] + d) * vm2
                vals[pos + 11] = 2.0 * float(np.sum(svy)) * dsv_dx
                vals[pos + 12] = 2.0 * float(np.sum(svy)) * dsv_dy
                vals[pos + 13] = 2.0 * float(svy @ dsv_dth)
                pos += 14
                res[ri + 2] = float(lam[k] @ p[k]) - eps
                vals[pos : pos + 8] = lam[k]
                vals[pos + 8 : pos + 16] = p[k]
                pos += 16
                ri += 3
        return res, vals

    def _stage2_ineq(self, z):
        delta = self.config.delta
        res = np.zeros(len(self.active_items))
        vals = []
        for bi, ((_pj, _nk), aps) in enumerate(self.active_items):
            off = self.block_off[bi]
            na, nb = len(aps.a_indices), len(aps.b_indices)
            yw = z[off + na : off + na + nb]
            res[bi] = delta - (1.0 - float(np.sum(yw)))
            vals.append(np.ones(nb))
        return res, np.concatenate(vals) if vals else np.zeros(0)

    def _vehicle_corner_positions(self, x, y, th):
        """World corners per node, (n, 4, 2), plus local corner coordinates."""
        local = self.a_veh.T  # 4 x 2
        c, s = np.cos(th), np.sin(th)
        d = self.center_offset
        cx = x + d * c
        cy = y + d * s
        px = cx[:, None] + c[:, None] * local[:, 0][None, :] - s[:, None] * local[:, 1][None, :]
        py = cy[:, None] + s[:, None] * local[:, 0][None, :] + c[:, None] * local[:, 1][None, :]
        return px, py, local, c, s

    def _ac_ineq(self, x, y, th):
        """Triangle-area-ratio rows, smoothed absolute values."""
        thr = self.config.ac_threshold
        veh = self.scenario.vehicle
        s_rect = veh.length * veh.width
        px, py, local, c, s = self._vehicle_corner_positions(x, y, th)
        d = self.center_offset
        res = np.zeros(8 * len(self.ac_items))
        vals = np.zeros(3 * 8 * len(self.ac_items))
        eta2 = _AC_SMOOTH * _AC_SMOOTH
        for bi, (j, k) in enumerate(self.ac_items):
            obs = self.obstacle_world[j].T  # 4 x 2 corners
            obs_next = np.roll(obs, -1, axis=0)
            e = obs_next - obs  # edge vectors
            base_r = bi * 8
            # vehicle corner vs obstacle rectangle
            for ci in range(4):
                bxk, byk = px[k, ci], py[k, ci]
                cross = e[:, 0] * (byk - obs[:, 1]) - e[:, 1] * (bxk - obs[:, 0])
                h = np.sqrt(cross * cross + eta2)
                area_sum = 0.5 * float(np.sum(h))
                r = base_r + ci
                res[r] = thr * s_rect - area_sum
                w = cross / h  # d|cross|/dcross smoothed
                dbx = -0.5 * float(np.sum(w * (-e[:, 1])))
                dby = -0.5 * float(np.sum(w * e[:, 0]))
                lx, ly = local[ci]
                dpx_dth = -s[k] * (d + lx) - c[k] * ly
                dpy_dth = c[k] * (d + lx) - s[k] * ly
                vals[3 * r] = dbx
                vals[3 * r + 1] = dby
                vals[3 * r + 2] = dbx * dpx_dth + dby * dpy_dth
            # obstacle corner vs vehicle rectangle
            vx = px[k]  # (4,)
            vy = py[k]
            vxn = np.roll(vx, -1)
            vyn = np.roll(vy, -1)
            locn = np.roll(local, -1, axis=0)
            for ci in range(4):
                bxk, byk = obs[ci]
                cross = (vxn - vx) * (byk - vy) - (vyn - vy) * (bxk - vx)
                h = np.sqrt(cross * cross + eta2)
                area_sum = 0.5 * float(np.sum(h))
                r = base_r + 4 + ci
                res[r] = thr * s_rect - area_sum
                w = cross / h
                # d cross_i / dV_i = (V'_y - b_y, b_x - V'_x); /dV'_i = (b_y - V_y, V_x - b_x)
                dVx = vyn - byk
                dVy = bxk - vxn
                dVnx = byk - vy
                dVny = vx - bxk
                # chain through V = center + R(theta) local
                dot_x = float(np.sum(w * (dVx + dVnx)))
                dot_y = float(np.sum(w * (dVy + dVny)))
                dVth = (
                    dVx * (-s[k] * (d + local[:, 0]) - c[k] * local[:, 1])
                    + dVy * (c[k] * (d + local[:, 0]) - s[k] * local[:, 1])
                    + dVnx * (-s[k] * (d + locn[:, 0]) - c[k] * locn[:, 1])
                    + dVny * (c[k] * (d + locn[:, 0]) - s[k] * locn[:, 1])
                )
                dot_th = float(np.sum(w * dVth))
                vals[3 * r] = -0.5 * dot_x
                vals[3 * r + 1] = -0.5 * dot_y
                vals[3 * r + 2] = -0.5 * dot_th
        return res, vals

    def _circle_ineq(self, x, y, th):
        n = self.n
        nc = self.n_circles
        rr = 2.0 * self.circle_radius + self.config.delta
        rr2 = rr * rr
        c, s = np.cos(th), np.sin(th)
        res = np.zeros(nc * nc * self.n_pairs * n)
        vals = np.zeros(3 * len(res))
        for j in range(self.n_pairs):
            q = self.obs_circle_centers[j]  # (nc, 2)
            for k in range(n):
                for a in range(nc):
                    lx = self.veh_circle_x[a]
                    pxk = x[k] + lx * c[k]
                    pyk = y[k] + lx * s[k]
                    for bidx in range(nc):
                        r = (j * n + k) * nc * nc + a * nc + bidx
                        dx = pxk - q[bidx, 0]
                        dy = pyk - q[bidx, 1]
                        res[r] = rr2 - (dx * dx + dy * dy)
                        vals[3 * r] = -2.0 * dx
                        vals[3 * r + 1] = -2.0 * dy
                        vals[3 * r + 2] = -2.0 * (dx * (-lx * s[k]) + dy * (lx * c[k]))
        return res, vals

    # ------------------------------------------------------------------ public
    def make_problem(self) -> NlpProblem:
        return NlpProblem(
            n_vars=self.n_vars,
            objective=self.objective,
            lower=self.lower,
            upper=self.upper,
            n_eq=self.n_eq,
            n_ineq=self.n_ineq,
            eq_constraints=self.eval_eq,
            ineq_constraints=self.eval_ineq,
            name=f"{self.mode}:{self.scenario.name}",
        )

    def pack(self, traj: Trajectory) -> np.ndarray:
        """Decision vector from a trajectory (resampled lengths must match)."""
        n = self.n
        if traj.grid.n_nodes != n:
            raise ValueError("trajectory grid does not match transcription grid")
        z = np.zeros(self.n_vars)
        z[self.off_x : self.off_x + n] = traj.states[:, 0]
        z[self.off_y : self.off_y + n] = traj.states[:, 1]
        z[self.off_th : self.off_th + n] = traj.states[:, 2]
        z[self.off_al : self.off_al + n] = traj.states[:, 3]
        z[self.off_v : self.off_v + n] = traj.controls[:, 0]
        z[self.off_om : self.off_om + n] = traj.controls[:, 1]
        if self.mode == "stage1" and traj.multiplier_blocks is not None:
            for j, blk in enumerate(traj.multiplier_blocks[: self.n_pairs]):
                op = self.off_pair[j]
                z[op : op + 8 * n] = blk["p"].ravel()
                z[op + 8 * n : op + 16 * n] = blk["lam"].ravel()
                z[op + 16 * n : op + 19 * n] = blk["v"].ravel()
        elif self.mode == "stage2":
            for bi, ((_pj, _nk), aps) in enumerate(self.active_items):
                off = self.block_off[bi]
                na, nb = len(aps.a_indices), len(aps.b_indices)
                z[off : off + na] = aps.x_weights
                z[off + na : off + na + nb] = aps.y_weights
        z[self.off_tf] = traj.t_f
        return z

    def initial_guess(self) -> np.ndarray:
        """Constant trajectory at the initial configuration, zero everything else."""
        n = self.n
        z = np.zeros(self.n_vars)
        z[self.off_x : self.off_x + n] = self.scenario.initial_pose.x
        z[self.off_y : self.off_y + n] = self.scenario.initial_pose.y
        z[self.off_th : self.off_th + n] = self.scenario.initial_pose.theta
        z[self.off_tf] = self.config.t_f_guess
        return z

    def unpack(self, z: np.ndarray) -> Trajectory:
        n = self.n
        states = np.stack(
            [
                z[self.off_x : self.off_x + n],
                z[self.off_y : self.off_y + n],
                z[self.off_th : self.off_th + n],
                z[self.off_al : self.off_al + n],
            ],
            axis=1,
        )
        controls = np.stack(
            [z[self.off_v : self.off_v + n], z[self.off_om : self.off_om + n]], axis=1
        )
        blocks = None
        if self.mode == "stage1":
            blocks = []
            for j in range(self.n_pairs):
                op = self.off_pair[j]
                blocks.append(
                    {
                        "p": z[op : op + 8 * n].reshape(n, 8).copy(),
                        "lam": z[op + 8 * n : op + 16 * n].reshape(n, 8).copy(),
                        "v": z[op + 16 * n : op + 19 * n].reshape(n, 3).copy(),
                    }
                )
        return Trajectory(
            grid=self.grid,
            states=states,
            controls=controls,
            t_f=float(z[self.off_tf]),
            multiplier_blocks=blocks,
        )


def assemble_stage1(
    scenario: Scenario, config: BompConfig, eps: float, grid: CollocationGrid
) -> TranscribedProblem:
    """Relaxed-KKT first-stage problem at relaxation eps."""
    return TranscribedProblem(scenario, config, grid, "stage1", eps=eps)


def assemble_stage2(
    scenario: Scenario,
    config: BompConfig,
    active_map: dict[tuple[int, int], ActivePointSet],
    grid: CollocationGrid,
) -> TranscribedProblem:
    """Active-point second-stage problem over the retained (pair, node) blocks."""
    return TranscribedProblem(scenario, config, grid, "stage2", active_map=active_map)


def assemble_ac(scenario: Scenario, config: BompConfig, grid: CollocationGrid) -> TranscribedProblem:
    """Area-criterion baseline problem (no collision variables)."""
    return TranscribedProblem(scenario, config, grid, "ac")


def assemble_circle(
    scenario: Scenario,
    config: BompConfig,
    grid: CollocationGrid,
    radius: float | None = None,
    n_circles: int | None = None,
) -> TranscribedProblem:
    """Overlapping-disc baseline problem."""
    return TranscribedProblem(
        scenario, config, grid, "circle", circle_radius=radius, n_circles=n_circles
    )
