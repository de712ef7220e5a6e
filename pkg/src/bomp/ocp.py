"""Pseudospectral machinery and the parking problem's continuous-time pieces.

Legendre-Gauss-Lobatto nodes (endpoints included, so boundary states sit on
nodes), Lobatto quadrature weights, and a barycentric differentiation matrix.
The differentiation convention follows the transcription: for samples f of
shape (..., K+1), `f @ grid.diff` evaluates the interpolant's derivative at
the nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, VehicleParams, vehicle_corners

__all__ = [
    "CollocationGrid",
    "Trajectory",
    "ParkingBounds",
    "make_grid",
    "interp_matrix",
    "interpolate",
    "dynamics",
    "dynamics_array",
    "objective_value",
    "terminal_residuals",
    "STATE_NAMES",
    "CONTROL_NAMES",
]

STATE_NAMES = ("x", "y", "theta", "alpha")
CONTROL_NAMES = ("v", "omega")


def _legendre_pair(k: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P_k(x) and P_{k-1}(x) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for j in range(1, k):
        p, p_prev = ((2 * j + 1) * x * p - j * p_prev) / (j + 1), p
    return p, p_prev


def _lgl_nodes(k: int) -> np.ndarray:
    """Lobatto nodes: roots of (1 - x^2) P_K'(x), Newton from Chebyshev guesses."""
    x = -np.cos(np.pi * np.arange(k + 1) / k)
    for _ in range(100):
        pk, pkm1 = _legendre_pair(k, x)
        # g = x P_K - P_{K-1} vanishes at the Lobatto nodes; g' = (K+1) P_K.
        step = (x * pk - pkm1) / ((k + 1) * pk)
        x = x - step
        if np.max(np.abs(step)) < 1e-14:
            break
    x[0], x[-1] = -1.0, 1.0
    return x


def _barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diff = np.subtract.outer(nodes, nodes)
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    return w / np.max(np.abs(w))


@dataclass(frozen=True)
class CollocationGrid:
    """K+1 Lobatto nodes on [-1, 1] with weights and differentiation matrix."""

    k: int
    nodes: np.ndarray
    weights: np.ndarray
    diff: np.ndarray  # samples @ diff = derivative samples

    @property
    def n_nodes(self) -> int:
        return self.k + 1

    def times(self, t_f: float) -> np.ndarray:
        """Physical node times for a trajectory on [0, t_f]."""
        return (self.nodes + 1.0) * (t_f / 2.0)


def make_grid(k: int) -> CollocationGrid:
    if not (2 <= k <= 200):
        raise ValueError(f"node-count parameter must satisfy 2 <= K <= 200, got {k}")
    nodes = _lgl_nodes(k)
    pk, _ = _legendre_pair(k, nodes)
    weights = 2.0 / (k * (k + 1) * pk**2)
    bw = _barycentric_weights(nodes)
    d_rows = np.subtract.outer(nodes, nodes)  # d_rows[i, j] = tau_i - tau_j
    np.fill_diagonal(d_rows, 1.0)
    d_usual = (bw[None, :] / bw[:, None]) / d_rows
    np.fill_diagonal(d_usual, 0.0)
    np.fill_diagonal(d_usual, -np.sum(d_usual, axis=1))
    return CollocationGrid(k=k, nodes=nodes, weights=weights, diff=d_usual.T)


def interp_matrix(src_nodes: np.ndarray, dst_nodes: np.ndarray) -> np.ndarray:
    """Barycentric Lagrange resampling matrix: f_dst = f_src @ M."""
    src = np.asarray(src_nodes, dtype=float)
    dst = np.asarray(dst_nodes, dtype=float)
    bw = _barycentric_weights(src)
    diff = np.subtract.outer(src, dst)  # (n_src, n_dst)
    exact = np.argwhere(np.abs(diff) < 1e-13)
    diff[exact[:, 0], exact[:, 1]] = 1.0
    M = bw[:, None] / diff
    M /= np.sum(M, axis=0)[None, :]
    for i, j in exact:
        M[:, j] = 0.0
        M[i, j] = 1.0
    return M


@dataclass
class Trajectory:
    """Discretized state/control histories on collocation nodes.

    `multiplier_blocks` carries per-obstacle-pair (p, lam, v) node histories
    and exists only on first-stage solutions.
    """

    grid: CollocationGrid
    states: np.ndarray  # (K+1, 4): x, y, theta, alpha
    controls: np.ndarray  # (K+1, 2): v, omega
    t_f: float
    multiplier_blocks: list[dict[str, np.ndarray]] | None = None

    def __post_init__(self):
        n = self.grid.n_nodes
        self.states = np.asarray(self.states, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        if self.states.shape != (n, 4) or self.controls.shape != (n, 2):
            raise ValueError("state/control arrays inconsistent with the grid")
        if not self.t_f > 0.0:
            raise ValueError("t_f must be positive")

    def times(self) -> np.ndarray:
        return self.grid.times(self.t_f)


@dataclass(frozen=True)
class ParkingBounds:
    """Control/terminal limits and parking-spot dimensions."""

    v_max: float = 2.0
    alpha_max: float = 0.714
    omega_max: float = 1.0
    eps_p: float = 0.10
    eps_theta: float = 0.17
    spot_length: float = 6.0
    spot_width: float = 2.5

    def __post_init__(self):
        for name in (
            "v_max",
            "alpha_max",
            "omega_max",
            "eps_p",
            "eps_theta",
            "spot_length",
            "spot_width",
        ):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def interpolate(traj: Trajectory, new_grid: CollocationGrid) -> Trajectory:
    """Resample states/controls onto a finer grid; multiplier blocks drop."""
    if new_grid.k < traj.grid.k:
        raise ValueError("interpolation target grid must be at least as fine")
    M = interp_matrix(traj.grid.nodes, new_grid.nodes)
    return Trajectory(
        grid=new_grid,
        states=(traj.states.T @ M).T,
        controls=(traj.controls.T @ M).T,
        t_f=traj.t_f,
    )


def dynamics(state, control, wheel_base: float) -> np.ndarray:
    """Front-steering kinematics (xdot, ydot, thetadot, alphadot)."""
    x, y, theta, alpha = state
    v, omega = control
    if abs(alpha) >= math.pi / 2.0:
        raise ValueError("steering angle at the tan singularity")
    return np.array(
        [
            v * math.cos(theta),
            v * math.sin(theta),
            v * math.tan(alpha) / wheel_base,
            omega,
        ]
    )


def dynamics_array(states: np.ndarray, controls: np.ndarray, wheel_base: float) -> np.ndarray:
    """Vectorized kinematics over node arrays; shape (N, 4)."""
    theta = states[:, 2]
    alpha = states[:, 3]
    v = controls[:, 0]
    return np.stack(
        [
            v * np.cos(theta),
            v * np.sin(theta),
            v * np.tan(alpha) / wheel_base,
            controls[:, 1],
        ],
        axis=1,
    )


def objective_value(traj: Trajectory) -> float:
    """Completion time plus quadrature of squared velocity."""
    v = traj.controls[:, 0]
    return float(traj.t_f + (traj.t_f / 2.0) * np.sum(traj.grid.weights * v**2))


def terminal_residuals(
    final_state,
    params: VehicleParams,
    bounds: ParkingBounds,
    spot_pose: Pose2 | None = None,
) -> np.ndarray:
    """Inequality residuals of the parking terminal set; negative = satisfied.

    Entries: heading window, then the four corner-pair midline conditions
    (front-pair y, rear-pair y, left-pair x, right-pair x), all evaluated in
    the spot frame (`spot_pose` maps spot to world; identity by default).
    The zero final velocity condition is enforced as a variable bound, not a
    residual.
    """
    x, y, theta = float(final_state[0]), float(final_state[1]), float(final_state[2])
    if spot_pose is not None:
        cs, ss = math.cos(spot_pose.theta), math.sin(spot_pose.theta)
        dx, dy = x - spot_pose.x, y - spot_pose.y
        x, y = cs * dx + ss * dy, -ss * dx + cs * dy
        theta = theta - spot_pose.theta
    fl, rl, rr, fr = vehicle_corners(Pose2(x, y, theta), params).points
    sl, sw, ep = bounds.spot_length, bounds.spot_width, bounds.eps_p
    return np.array(
        [
            abs(theta) - bounds.eps_theta,
            abs((fl[1] + fr[1] - sw) / 2.0) - ep,
            abs((rr[1] + rl[1] - sw) / 2.0) - ep,
            abs((fl[0] + rl[0] - sl) / 2.0) - ep,
            abs((fr[0] + rr[0] - sl) / 2.0) - ep,
        ]
    )
