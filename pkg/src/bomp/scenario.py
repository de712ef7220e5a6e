"""Scenario and planner-configuration types."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    ConvexPolytope,
    Pose2,
    VehicleParams,
    is_convex_ccw,
    sat_disjoint,
    transform_points,
    vehicle_corners,
)
from .nlp import SolverOptions
from .ocp import ParkingBounds

__all__ = ["Scenario", "BompConfig", "spot_center_pose", "default_stage_options"]


def spot_center_pose(
    vehicle: VehicleParams, bounds: ParkingBounds, spot_pose: Pose2 | None = None
) -> Pose2:
    """Rear-axle pose that centers the footprint in the parking spot.

    `spot_pose` maps the spot frame into the world frame (identity default).
    """
    local = Pose2(
        bounds.spot_length / 2.0 - vehicle.center_offset,
        bounds.spot_width / 2.0,
        0.0,
    )
    if spot_pose is None:
        return local
    c, s = math.cos(spot_pose.theta), math.sin(spot_pose.theta)
    return Pose2(
        spot_pose.x + c * local.x - s * local.y,
        spot_pose.y + s * local.x + c * local.y,
        spot_pose.theta + local.theta,
    )


@dataclass
class Scenario:
    """World description: vehicle, limits, obstacles, start (and optional goal).

    Obstacles are convex polygons given in a local frame plus a world pose.
    With `goal_pose` unset the task is parking into the spot terminal set;
    with it set the task ends at that exact configuration.
    """

    vehicle: VehicleParams
    bounds: ParkingBounds
    obstacles: list[tuple[ConvexPolytope, Pose2]]
    initial_pose: Pose2
    goal_pose: Pose2 | None = None
    spot_pose: Pose2 | None = None  # spot frame in world coordinates; None = identity
    name: str = "scenario"

    def __post_init__(self):
        for i, (poly, _pose) in enumerate(self.obstacles):
            if poly.dim != 2:
                raise ValueError(f"obstacle {i} is not planar")
            if not is_convex_ccw(poly.points):
                raise ValueError(f"obstacle {i} polygon must be convex and counterclockwise")
        start = vehicle_corners(self.initial_pose, self.vehicle)
        for i, world in enumerate(self.obstacle_world_polygons()):
            disjoint, _ = sat_disjoint(start, world)
            if not disjoint:
                raise ValueError(f"initial pose collides with obstacle {i}")

    def obstacle_world_polygons(self) -> list[ConvexPolytope]:
        return [transform_points(poly, pose) for poly, pose in self.obstacles]

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)


def default_stage_options(stage: int) -> SolverOptions:
    """Practical stopping thresholds for the transcribed problems.

    The first stage only needs a collision-free approximate trajectory, so
    it runs looser; the second stage is tightened until the collocation
    defect passes verification.
    """
    if stage == 1:
        return SolverOptions(
            tol=3e-5,
            a_tol=1e-7,
            cv_tol=1e-8,
            acv_tol=1e-9,
            c_tol=1e-4,
            ac_tol=1e-5,
            d_tol=1.0,
            ad_tol=1.0,
            max_iterations=600,
            max_seconds=90.0,
        )
    return SolverOptions(
        tol=1e-6,
        a_tol=1e-8,
        cv_tol=1e-9,
        acv_tol=1e-10,
        c_tol=1e-4,
        ac_tol=1e-5,
        d_tol=1.0,
        ad_tol=1.0,
        max_iterations=600,
        max_seconds=90.0,
    )


@dataclass
class BompConfig:
    """Algorithm inputs: safety margin, relaxation schedule, stage sizes."""

    delta: float = 0.05
    epsilon_sequence: tuple[float, ...] = (0.1, 0.01, 0.001, 1e-4, 1e-5, 1e-6)
    j_active: float = 0.30
    nodes_stage1: int = 15
    nodes_stage2: int = 30
    t_f_guess: float = 20.0
    t_f_min: float = 1.0
    t_f_max: float = 120.0
    xy_box: float = 30.0
    theta_box: float = 2.0 * math.pi
    terminal_margin: float = 1e-7
    verify_subdivisions: int = 10
    ac_threshold: float = 1.025
    circle_radius: float = 1.3
    n_circles: int = 3
    stage1_options: SolverOptions = field(default_factory=lambda: default_stage_options(1))
    stage2_options: SolverOptions = field(default_factory=lambda: default_stage_options(2))

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        eps = tuple(float(e) for e in self.epsilon_sequence)
        if not eps or any(e <= 0.0 for e in eps):
            raise ValueError("epsilon sequence must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon sequence must be strictly decreasing")
        self.epsilon_sequence = eps
        if not self.j_active > self.delta:
            raise ValueError("active-constraint threshold must exceed delta")
        if self.nodes_stage2 < self.nodes_stage1:
            raise ValueError("second-stage grid must be at least as fine")
