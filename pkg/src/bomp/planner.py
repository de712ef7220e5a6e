"""Two-stage planning algorithm, baselines, and trajectory verification.

The first stage solves the relaxed-KKT transcription over a decreasing
relaxation sequence until the trajectory passes an independent
separating-axis collision check; the second stage re-solves on a finer grid
with only the active-point collision blocks retained.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import ConvexPolytope, Pose2, sat_disjoint, vehicle_center_rect, vehicle_corners
from .j2 import ActivePointSet, J2Result, extract_active_points, j2_mj
from .nlp import NlpProblem, NlpSolution, NlpStatus, SolverOptions, solve_nlp
from .ocp import (
    CollocationGrid,
    Trajectory,
    dynamics_array,
    interp_matrix,
    interpolate,
    make_grid,
    objective_value,
    terminal_residuals,
)
from .scenario import BompConfig, Scenario
from .transcribe import (
    TranscribedProblem,
    assemble_ac,
    assemble_circle,
    assemble_stage1,
    assemble_stage2,
)

__all__ = [
    "PlanReport",
    "VerificationReport",
    "run_bomp",
    "run_ac",
    "run_mjac",
    "run_circle",
    "filter_active_constraints",
    "verify_trajectory",
    "collision_free",
    "epsilon_delta_grid",
    "GridSpec",
    "obstacle_in_vehicle_frame",
    "pseudodistances",
]


def obstacle_in_vehicle_frame(
    world_points: np.ndarray, pose_xyth: np.ndarray, center_offset: float
) -> np.ndarray:
    """Obstacle corners mapped into the vehicle-center frame at a given state."""
    x, y, th = float(pose_xyth[0]), float(pose_xyth[1]), float(pose_xyth[2])
    c, s = math.cos(th), math.sin(th)
    tx, ty = x + center_offset * c, y + center_offset * s
    rel = world_points - np.array([tx, ty])
    return np.stack([c * rel[:, 0] + s * rel[:, 1], -s * rel[:, 0] + c * rel[:, 1]], axis=1)


def pseudodistances(scenario: Scenario, pose_xyth) -> list[J2Result]:
    """Reduced pseudodistance to every obstacle at one configuration."""
    a = vehicle_center_rect(scenario.vehicle)
    d = scenario.vehicle.center_offset
    out = []
    for world in scenario.obstacle_world_polygons():
        pts = obstacle_in_vehicle_frame(world.points, np.asarray(pose_xyth, float), d)
        out.append(j2_mj(a, ConvexPolytope(pts), check_interior=False))
    return out


def _dense_parameters(grid: CollocationGrid, subdivisions: int) -> np.ndarray:
    """Node parameters plus `subdivisions` interior points per interval."""
    taus = [grid.nodes]
    for a, b in zip(grid.nodes[:-1], grid.nodes[1:]):
        taus.append(np.linspace(a, b, subdivisions + 2)[1:-1])
    return np.sort(np.concatenate(taus))


def _dense_states(traj: Trajectory, taus: np.ndarray) -> np.ndarray:
    m = interp_matrix(traj.grid.nodes, taus)
    return (traj.states.T @ m).T


def collision_free(traj: Trajectory, scenario: Scenario, subdivisions: int = 10) -> bool:
    """Separating-axis check with strictly positive clearance at dense samples."""
    taus = _dense_parameters(traj.grid, subdivisions)
    states = _dense_states(traj, taus)
    worlds = scenario.obstacle_world_polygons()
    for row in states:
        footprint = vehicle_corners(Pose2(row[0], row[1], row[2]), scenario.vehicle)
        for world in worlds:
            disjoint, clearance = sat_disjoint(footprint, world)
            if not disjoint or clearance <= 0.0:
                return False
    return True


@dataclass
class VerificationReport:
    passed: bool
    collision_free: bool
    min_clearance: float
    min_pseudodistance: float
    pseudodistance_ok: bool
    bounds_ok: bool
    terminal_ok: bool
    max_terminal_residual: float
    defect: float
    defect_ok: bool
    n_samples: int
    failure: str | None = None

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "collision_free": self.collision_free,
            "min_clearance": self.min_clearance,
            "min_pseudodistance": self.min_pseudodistance,
            "pseudodistance_ok": self.pseudodistance_ok,
            "bounds_ok": self.bounds_ok,
            "terminal_ok": self.terminal_ok,
            "max_terminal_residual": self.max_terminal_residual,
            "defect": self.defect,
            "defect_ok": self.defect_ok,
            "n_samples": self.n_samples,
            "failure": self.failure,
        }


def verify_trajectory(
    traj: Trajectory,
    scenario: Scenario,
    delta: float,
    subdivisions: int = 10,
    defect_tol: float = 1e-6,
) -> VerificationReport:
    """Independent post-solve checks.

    Separating-axis disjointness and the pseudodistance margin are sampled
    at the nodes and at `subdivisions` interpolated points per interval;
    control/steering bounds are checked at the nodes (where the
    transcription enforces them exactly); terminal conditions at the final
    node; the collocation defect over the whole grid.
    """
    if subdivisions < 1:
        raise ValueError("subdivisions must be >= 1")
    sc = scenario
    taus = _dense_parameters(traj.grid, subdivisions)
    states = _dense_states(traj, taus)
    worlds = sc.obstacle_world_polygons()
    a_rect = vehicle_center_rect(sc.vehicle)
    d_off = sc.vehicle.center_offset

    coll_ok = True
    min_clear = math.inf
    min_mj = math.inf
    for row in states:
        footprint = vehicle_corners(Pose2(row[0], row[1], row[2]), sc.vehicle)
        for world in worlds:
            disjoint, clearance = sat_disjoint(footprint, world)
            if not disjoint or clearance <= 0.0:
                coll_ok = False
                min_clear = 0.0
            else:
                min_clear = min(min_clear, clearance)
            pts = obstacle_in_vehicle_frame(world.points, row[:3], d_off)
            mj = j2_mj(a_rect, ConvexPolytope(pts), check_interior=False).value
            min_mj = min(min_mj, mj)
    if not worlds:
        min_clear = math.inf
        min_mj = math.inf
    mj_ok = min_mj >= delta - 1e-6

    b = sc.bounds
    tol = 1e-8
    bounds_ok = bool(
        np.all(np.abs(traj.controls[:, 0]) <= b.v_max + tol)
        and np.all(np.abs(traj.controls[:, 1]) <= b.omega_max + tol)
        and np.all(np.abs(traj.states[:, 3]) <= b.alpha_max + tol)
        and abs(traj.controls[0, 0]) <= tol
        and abs(traj.controls[-1, 0]) <= tol
    )

    if sc.goal_pose is None:
        term = terminal_residuals(traj.states[-1], sc.vehicle, b, spot_pose=sc.spot_pose)
        max_term = float(np.max(term))
        terminal_ok = bool(max_term <= 0.0)
    else:
        gp = sc.goal_pose
        err = np.array(
            [
                traj.states[-1, 0] - gp.x,
                traj.states[-1, 1] - gp.y,
                traj.states[-1, 2] - gp.theta,
            ]
        )
        max_term = float(np.max(np.abs(err)))
        terminal_ok = max_term <= 1e-6

    f_dyn = dynamics_array(traj.states, traj.controls, sc.vehicle.wheel_base)
    defect = float(
        np.max(np.abs(traj.states.T @ traj.grid.diff - (traj.t_f / 2.0) * f_dyn.T))
    )
    defect_ok = defect <= defect_tol

    passed = coll_ok and mj_ok and bounds_ok and terminal_ok and defect_ok
    failure = None
    if not passed:
        parts = []
        if not coll_ok:
            parts.append("collision")
        if not mj_ok:
            parts.append(f"pseudodistance {min_mj:.3e} < {delta - 1e-6:.3e}")
        if not bounds_ok:
            parts.append("bounds")
        if not terminal_ok:
            parts.append(f"terminal residual {max_term:.3e}")
        if not defect_ok:
            parts.append(f"defect {defect:.3e}")
        failure = ", ".join(parts)
    return VerificationReport(
        passed=passed,
        collision_free=coll_ok,
        min_clearance=min_clear if math.isfinite(min_clear) else -1.0,
        min_pseudodistance=min_mj if math.isfinite(min_mj) else -1.0,
        pseudodistance_ok=mj_ok,
        bounds_ok=bounds_ok,
        terminal_ok=terminal_ok,
        max_terminal_residual=max_term,
        defect=defect,
        defect_ok=defect_ok,
        n_samples=states.shape[0],
        failure=failure,
    )


def filter_active_constraints(
    traj: Trajectory, scenario: Scenario, j_active: float
) -> dict[tuple[int, int], ActivePointSet]:
    """Per (pair, node) active-point sets where the pseudodistance <= threshold.

    The pseudodistance is evaluated fresh at every node of the given
    (already interpolated) trajectory; the inclusion rule is inclusive.
    """
    a_rect = vehicle_center_rect(scenario.vehicle)
    d_off = scenario.vehicle.center_offset
    worlds = scenario.obstacle_world_polygons()
    out: dict[tuple[int, int], ActivePointSet] = {}
    for k, row in enumerate(traj.states):
        for j, world in enumerate(worlds):
            pts = obstacle_in_vehicle_frame(world.points, row[:3], d_off)
            b_poly = ConvexPolytope(pts)
            res = j2_mj(a_rect, b_poly, check_interior=False)
            if res.value <= j_active:
                if res.value <= 0.0:
                    raise RuntimeError(
                        f"trajectory touches obstacle {j} at node {k}; cannot extract active points"
                    )
                aps = extract_active_points(a_rect, b_poly, res)
                # Store indices into the obstacle polygon; points in world frame
                # are reconstructed by the transcription from the indices.
                out[(j, k)] = aps
    return out


@dataclass
class StageRecord:
    eps: float
    status: str
    iterations: int
    seconds: float
    objective: float
    collision_free: bool

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "status": self.status,
            "iterations": self.iterations,
            "seconds": self.seconds,
            "objective": self.objective,
            "collision_free": self.collision_free,
        }


@dataclass
class PlanReport:
    algorithm: str
    scenario_name: str
    success: bool
    objective: float | None
    t_f: float | None
    stage1_seconds: float
    stage2_seconds: float
    total_seconds: float
    eps_records: list[StageRecord] = field(default_factory=list)
    two_stage1_iterations: bool | None = None
    trajectory: Trajectory | None = None
    stage1_trajectory: Trajectory | None = None
    verification: VerificationReport | None = None
    dimensions: dict = field(default_factory=dict)
    solver_status: str = ""
    path_length: float | None = None
    failure_reason: str | None = None
    n_active_blocks: int | None = None

    def as_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "scenario": self.scenario_name,
            "success": self.success,
            "objective": self.objective,
            "t_f": self.t_f,
            "stage1_seconds": self.stage1_seconds,
            "stage2_seconds": self.stage2_seconds,
            "total_seconds": self.total_seconds,
            "eps_records": [r.as_dict() for r in self.eps_records],
            "two_stage1_iterations": self.two_stage1_iterations,
            "verification": self.verification.as_dict() if self.verification else None,
            "dimensions": self.dimensions,
            "solver_status": self.solver_status,
            "path_length": self.path_length,
            "failure_reason": self.failure_reason,
            "n_active_blocks": self.n_active_blocks,
        }


def path_length(traj: Trajectory, samples_per_interval: int = 10) -> float:
    taus = _dense_parameters(traj.grid, samples_per_interval)
    xy = _dense_states(traj, taus)[:, :2]
    return float(np.sum(np.linalg.norm(np.diff(xy, axis=0), axis=1)))


def _grids(cfg: BompConfig) -> tuple[CollocationGrid, CollocationGrid]:
    return make_grid(cfg.nodes_stage1 - 1), make_grid(cfg.nodes_stage2 - 1)


def _solver_status_ok(sol: NlpSolution) -> bool:
    return sol.status in (NlpStatus.SOLVED, NlpStatus.ACCEPTABLE_LEVEL, NlpStatus.ITERATION_LIMIT)


def _stage1_loop(scenario: Scenario, cfg: BompConfig, grid1: CollocationGrid):
    """Relaxation loop shared by the full planner and the hybrid baseline.

    Returns (trajectory or None, records, stage-1 dimensions, final z, last
    transcription).  The previous solution is reused verbatim as the next
    initial point, multipliers included.
    """
    records: list[StageRecord] = []
    z = None
    trans = None
    traj = None
    for eps in cfg.epsilon_sequence[:6]:
        trans = assemble_stage1(scenario, cfg, eps, grid1)
        if z is None:
            z = trans.initial_guess()
        t0 = time.perf_counter()
        sol = solve_nlp(trans.make_problem(), z, cfg.stage1_options)
        dt = time.perf_counter() - t0
        z = sol.x
        cand = trans.unpack(z)
        ok = _solver_status_ok(sol) and collision_free(
            cand, scenario, cfg.verify_subdivisions
        )
        records.append(
            StageRecord(eps, sol.status.value, sol.iterations, dt, objective_value(cand), ok)
        )
        if ok:
            traj = cand
            break
    return traj, records, trans.dimensions.as_dict() if trans else {}, z, trans


def run_bomp(scenario: Scenario, cfg: BompConfig | None = None) -> PlanReport:
    """Two-stage planner: relaxed-KKT stage then active-point stage."""
    cfg = cfg or BompConfig()
    grid1, grid2 = _grids(cfg)
    t_start = time.perf_counter()
    traj1, records, dims1, _z, _trans = _stage1_loop(scenario, cfg, grid1)
    stage1_s = time.perf_counter() - t_start

    report = PlanReport(
        algorithm="bomp",
        scenario_name=scenario.name,
        success=False,
        objective=None,
        t_f=None,
        stage1_seconds=stage1_s,
        stage2_seconds=0.0,
        total_seconds=stage1_s,
        eps_records=records,
        two_stage1_iterations=len(records) == 2,
        dimensions={"stage1": dims1},
    )
    if traj1 is None:
        report.failure_reason = "relaxation sequence exhausted without a collision-free trajectory"
        return report
    report.stage1_trajectory = traj1

    t1 = time.perf_counter()
    traj30 = interpolate(traj1, grid2)
    try:
        active_map = filter_active_constraints(traj30, scenario, cfg.j_active)
    except RuntimeError as exc:
        report.failure_reason = str(exc)
        report.total_seconds = time.perf_counter() - t_start
        return report
    trans2 = assemble_stage2(scenario, cfg, active_map, grid2)
    z2 = trans2.pack(traj30)
    sol2 = solve_nlp(trans2.make_problem(), z2, cfg.stage2_options)
    traj2 = trans2.unpack(sol2.x)
    stage2_s = time.perf_counter() - t1

    verification = verify_trajectory(
        traj2, scenario, cfg.delta, cfg.verify_subdivisions
    )
    report.stage2_seconds = stage2_s
    report.total_seconds = time.perf_counter() - t_start
    report.dimensions["stage2"] = trans2.dimensions.as_dict()
    report.solver_status = sol2.status.value
    report.n_active_blocks = len(active_map)
    if verification.passed:
        report.success = True
        report.trajectory = traj2
        report.objective = objective_value(traj2)
        report.t_f = traj2.t_f
        report.verification = verification
        report.path_length = path_length(traj2)
    else:
        report.trajectory = traj2
        report.verification = verification
        report.failure_reason = f"final-stage verification failed: {verification.failure}"
    return report


def run_mjac(scenario: Scenario, cfg: BompConfig | None = None) -> PlanReport:
    """Hybrid baseline: identical first stage, area-criterion final stage
    restricted to the filtered active (pair, node) entries."""
    cfg = cfg or BompConfig()
    grid1, grid2 = _grids(cfg)
    t_start = time.perf_counter()
    traj1, records, dims1, _z, _trans = _stage1_loop(scenario, cfg, grid1)
    stage1_s = time.perf_counter() - t_start

    report = PlanReport(
        algorithm="mjac",
        scenario_name=scenario.name,
        success=False,
        objective=None,
        t_f=None,
        stage1_seconds=stage1_s,
        stage2_seconds=0.0,
        total_seconds=stage1_s,
        eps_records=records,
        two_stage1_iterations=len(records) == 2,
        dimensions={"stage1": dims1},
    )
    if traj1 is None:
        report.failure_reason = "relaxation sequence exhausted without a collision-free trajectory"
        return report
    report.stage1_trajectory = traj1

    t1 = time.perf_counter()
    traj30 = interpolate(traj1, grid2)
    try:
        active_map = filter_active_constraints(traj30, scenario, cfg.j_active)
    except RuntimeError as exc:
        report.failure_reason = str(exc)
        report.total_seconds = time.perf_counter() - t_start
        return report
    subset = sorted(active_map.keys())
    trans2 = TranscribedProblem(scenario, cfg, grid2, "ac", ac_subset=subset)
    z2 = trans2.pack(traj30)
    sol2 = solve_nlp(trans2.make_problem(), z2, cfg.stage2_options)
    traj2 = trans2.unpack(sol2.x)
    stage2_s = time.perf_counter() - t1

    verification = verify_trajectory(traj2, scenario, 0.0, cfg.verify_subdivisions)
    report.stage2_seconds = stage2_s
    report.total_seconds = time.perf_counter() - t_start
    report.dimensions["stage2"] = trans2.dimensions.as_dict()
    report.solver_status = sol2.status.value
    report.n_active_blocks = len(subset)
    ok = _solver_status_ok(sol2) and verification.passed
    report.trajectory = traj2
    report.verification = verification
    if ok:
        report.success = True
        report.objective = objective_value(traj2)
        report.t_f = traj2.t_f
        report.path_length = path_length(traj2)
    else:
        report.failure_reason = (
            f"final-stage solve {sol2.status.value}; verification: {verification.failure}"
        )
    return report


def run_ac(scenario: Scenario, cfg: BompConfig | None = None) -> PlanReport:
    """Area-criterion baseline: one cold coarse solve, one warm fine solve."""
    cfg = cfg or BompConfig()
    grid1, grid2 = _grids(cfg)
    t_start = time.perf_counter()
    trans1 = assemble_ac(scenario, cfg, grid1)
    sol1 = solve_nlp(trans1.make_problem(), trans1.initial_guess(), cfg.stage1_options)
    stage1_s = time.perf_counter() - t_start
    traj1 = trans1.unpack(sol1.x)

    report = PlanReport(
        algorithm="ac",
        scenario_name=scenario.name,
        success=False,
        objective=None,
        t_f=None,
        stage1_seconds=stage1_s,
        stage2_seconds=0.0,
        total_seconds=stage1_s,
        dimensions={"stage1": trans1.dimensions.as_dict()},
        solver_status=sol1.status.value,
    )
    # The baseline has no relaxation loop; a failed cold solve ends the run.
    if not (_solver_status_ok(sol1) and sol1.max_violation_raw <= 1e-5):
        report.failure_reason = f"initial-stage solve failed ({sol1.status.value})"
        report.stage1_trajectory = traj1
        return report
    report.stage1_trajectory = traj1

    t1 = time.perf_counter()
    traj30 = interpolate(traj1, grid2)
    trans2 = assemble_ac(scenario, cfg, grid2)
    sol2 = solve_nlp(trans2.make_problem(), trans2.pack(traj30), cfg.stage2_options)
    traj2 = trans2.unpack(sol2.x)
    stage2_s = time.perf_counter() - t1

    verification = verify_trajectory(traj2, scenario, 0.0, cfg.verify_subdivisions)
    report.stage2_seconds = stage2_s
    report.total_seconds = time.perf_counter() - t_start
    report.dimensions["stage2"] = trans2.dimensions.as_dict()
    report.solver_status = sol2.status.value
    ok = _solver_status_ok(sol2) and verification.passed
    report.trajectory = traj2
    report.verification = verification
    if ok:
        report.success = True
        report.objective = objective_value(traj2)
        report.t_f = traj2.t_f
        report.path_length = path_length(traj2)
    else:
        report.failure_reason = (
            f"final-stage solve {sol2.status.value}; verification: {verification.failure}"
        )
    return report


def run_circle(
    scenario: Scenario,
    cfg: BompConfig | None = None,
    radius: float | None = None,
    n_circles: int | None = None,
) -> PlanReport:
    """Overlapping-disc baseline: coarse solve then warm fine solve."""
    cfg = cfg or BompConfig()
    grid1, grid2 = _grids(cfg)
    t_start = time.perf_counter()
    trans1 = assemble_circle(scenario, cfg, grid1, radius, n_circles)
    sol1 = solve_nlp(trans1.make_problem(), trans1.initial_guess(), cfg.stage1_options)
    stage1_s = time.perf_counter() - t_start
    traj1 = trans1.unpack(sol1.x)

    report = PlanReport(
        algorithm="circle",
        scenario_name=scenario.name,
        success=False,
        objective=None,
        t_f=None,
        stage1_seconds=stage1_s,
        stage2_seconds=0.0,
        total_seconds=stage1_s,
        dimensions={"stage1": trans1.dimensions.as_dict()},
        solver_status=sol1.status.value,
    )
    if not (_solver_status_ok(sol1) and sol1.max_violation_raw <= 1e-5):
        report.failure_reason = f"initial-stage solve failed ({sol1.status.value})"
        report.stage1_trajectory = traj1
        return report
    report.stage1_trajectory = traj1

    t1 = time.perf_counter()
    traj30 = interpolate(traj1, grid2)
    trans2 = assemble_circle(scenario, cfg, grid2, radius, n_circles)
    sol2 = solve_nlp(trans2.make_problem(), trans2.pack(traj30), cfg.stage2_options)
    traj2 = trans2.unpack(sol2.x)
    stage2_s = time.perf_counter() - t1

    verification = verify_trajectory(traj2, scenario, 0.0, cfg.verify_subdivisions)
    report.stage2_seconds = stage2_s
    report.total_seconds = time.perf_counter() - t_start
    report.dimensions["stage2"] = trans2.dimensions.as_dict()
    report.solver_status = sol2.status.value
    ok = _solver_status_ok(sol2) and verification.passed
    report.trajectory = traj2
    report.verification = verification
    if ok:
        report.success = True
        report.objective = objective_value(traj2)
        report.t_f = traj2.t_f
        report.path_length = path_length(traj2)
    else:
        report.failure_reason = (
            f"final-stage solve {sol2.status.value}; verification: {verification.failure}"
        )
    return report


# --------------------------------------------------------------------------
# Relaxation-interior sampling (translation-only robot).


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def cells(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.linspace(self.x_min, self.x_max, self.nx),
            np.linspace(self.y_min, self.y_max, self.ny),
        )


def _makkt_feasibility_min(q, bvec, cvec, p0, lam0, v0, eps, delta, tol=1e-10):
    """Minimize the squared violation of the relaxed-KKT system.

    Variables are stacked (p, lam, v); p and lam are nonnegative.  Member
    configurations reach (numerically) zero.
    """
    npd = q.shape[1]
    mv = q.shape[0]
    n = 2 * npd + mv

    def unpack(w):
        return w[:npd], w[npd : 2 * npd], w[2 * npd :]

    def objective(w):
        p, lam, v = unpack(w)
        feas = q @ p - bvec
        margin = (eps + delta) - (1.0 + cvec @ p)
        sv = cvec - lam + q.T @ v
        norm_ex = float(sv @ sv) - eps
        compl_ex = float(lam @ p) - eps
        h_m = max(margin, 0.0)
        h_n = max(norm_ex, 0.0)
        h_c = max(compl_ex, 0.0)
        f = float(feas @ feas) + h_m * h_m + h_n * h_n + h_c * h_c
        g = np.zeros(n)
        g[:npd] += 2.0 * (q.T @ feas)
        if h_m > 0.0:
            g[:npd] += 2.0 * h_m * (-cvec)
        if h_n > 0.0:
            g[npd : 2 * npd] += 2.0 * h_n * (-2.0 * sv)
            g[2 * npd :] += 2.0 * h_n * (2.0 * (q @ sv))
        if h_c > 0.0:
            g[:npd] += 2.0 * h_c * lam
            g[npd : 2 * npd] += 2.0 * h_c * p
        return f, g

    lb = np.concatenate([np.zeros(2 * npd), np.full(mv, -np.inf)])
    ub = np.full(n, np.inf)
    prob = NlpProblem(n_vars=n, objective=objective, lower=lb, upper=ub)
    w0 = np.concatenate([p0, lam0, v0])
    opts = SolverOptions(
        tol=1e-10, a_tol=1e-12, cv_tol=1.0, acv_tol=1.0, c_tol=1.0, ac_tol=1.0,
        max_iterations=200,
    )
    sol = solve_nlp(prob, w0, opts)
    return float(sol.objective)


def epsilon_delta_grid(
    obstacle: ConvexPolytope,
    robot: ConvexPolytope,
    eps: float,
    delta: float,
    grid: GridSpec,
    feas_tol: float = 1e-8,
) -> np.ndarray:
    """Membership grid of the relaxed collision-margin system.

    The robot translates with fixed orientation; a cell is a member iff
    multipliers exist making the relaxed-KKT rows hold with margin
    eps+delta at that configuration.  Cells whose exact pseudodistance
    already clears the margin short-circuit (the exact LP solution is a
    relaxed-KKT point for any eps >= 0).
    """
    from .j2 import assemble_mj
    from .simplex import LpProblem, solve_lp

    xs, ys = grid.cells()
    out = np.zeros((grid.ny, grid.nx), dtype=bool)
    n1 = robot.n_points
    for iy, cy in enumerate(ys):
        for ix, cx in enumerate(xs):
            bpts = obstacle.points - np.array([cx, cy])
            b_poly = ConvexPolytope(bpts)
            res = j2_mj(robot, b_poly, check_interior=False)
            if res.value >= eps + delta:
                out[iy, ix] = True
                continue
            if eps <= 0.0:
                out[iy, ix] = False
                continue
            asm = assemble_mj_no_check(robot, b_poly)
            # Exact-KKT start: weights from the LP, multipliers from its dual.
            p0 = np.concatenate([res.x_weights, res.y_weights])
            lam0, v0 = _lp_multipliers(asm, p0)
            fmin = _makkt_feasibility_min(
                asm.q, asm.b, asm.c, p0, lam0, v0, eps, delta
            )
            out[iy, ix] = fmin <= feas_tol
    return out


def assemble_mj_no_check(a: ConvexPolytope, b: ConvexPolytope):
    """Compact reduced-form blocks without the interior-point precondition."""
    from .j2 import MjAssembly

    m = a.dim
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


def _lp_multipliers(asm, p_star: np.ndarray):
    """Least-squares multipliers that zero the stationarity residual where
    weights are strictly positive; the remaining slack goes to lam >= 0."""
    q, c = asm.q, asm.c
    act = p_star > 1e-9
    if np.any(act):
        v0, *_ = np.linalg.lstsq(q[:, act].T, -c[act], rcond=None)
    else:
        v0 = np.zeros(q.shape[0])
    lam0 = np.maximum(c + q.T @ v0, 0.0)
    return lam0, v0
