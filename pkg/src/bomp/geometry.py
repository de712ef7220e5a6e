"""Planar convex geometry: polytopes, rigid poses, vehicle footprints, SAT oracle.

The separating-axis test here is deliberately independent of the LP-based
pseudodistance machinery so it can serve as a verification oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConvexPolytope",
    "Pose2",
    "VehicleParams",
    "DegeneratePolygonError",
    "transform_points",
    "inverse_pose",
    "vehicle_corners",
    "vehicle_center_rect",
    "sat_disjoint",
    "separation",
    "triangle_area",
    "polygon_area",
    "is_convex_ccw",
    "VEHICLE_CORNER_ORDER",
]


class DegeneratePolygonError(ValueError):
    """Raised when a zero-area polygon is fed to an operation that needs area."""


@dataclass(frozen=True)
class ConvexPolytope:
    """Point-set (convex hull) representation of a rigid body in m dimensions.

    Points are not re-hulled; the caller supplies hull vertices.  Planar
    polygons used by the SAT oracle must be in counterclockwise order.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be a non-empty (n, m) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        n = pts.shape[0]
        for i in range(n):
            for j in range(i + 1, n):
                if np.array_equal(pts[i], pts[j]):
                    raise ValueError(f"duplicate point at indices {i}, {j}")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class Pose2:
    """Planar rigid pose; theta is normalized to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        th = float(self.theta)
        th = math.remainder(th, 2.0 * math.pi)
        if th <= -math.pi:
            th += 2.0 * math.pi
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", th)

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class VehicleParams:
    """Rectangular vehicle dimensions; frame origin at the rear-axle midpoint."""

    wheel_base: float = 2.800
    front_overhang: float = 0.960
    rear_overhang: float = 0.929
    width: float = 1.942

    def __post_init__(self):
        for name in ("wheel_base", "front_overhang", "rear_overhang", "width"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def length(self) -> float:
        return self.front_overhang + self.wheel_base + self.rear_overhang

    @property
    def center_offset(self) -> float:
        """Distance from the rear axle to the rectangle's geometric center."""
        return (self.front_overhang + self.wheel_base - self.rear_overhang) / 2.0


def transform_points(poly: ConvexPolytope, pose: Pose2) -> ConvexPolytope:
    """Rotate by pose.theta then translate by (pose.x, pose.y); order preserved."""
    if poly.dim != 2:
        raise ValueError(f"transform_points requires planar polytopes, got dim {poly.dim}")
    R = pose.matrix()
    pts = poly.points @ R.T + np.array([pose.x, pose.y])
    return ConvexPolytope(pts)


def inverse_pose(pose: Pose2) -> Pose2:
    """Pose g^-1 such that transform_points(transform_points(P, g), g^-1) = P."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Pose2(-(c * pose.x + s * pose.y), -(-s * pose.x + c * pose.y), -pose.theta)


# Corner order of the footprint returned by vehicle_corners (counterclockwise).
VEHICLE_CORNER_ORDER = ("front_left", "rear_left", "rear_right", "front_right")


def vehicle_corners(q: Pose2, params: VehicleParams) -> ConvexPolytope:
    """World-frame footprint rectangle at configuration q.

    Rectangle length l1+l+l2, width W, rear edge rear_overhang behind the
    rear axle, laterally centered.  Corners are returned counterclockwise in
    VEHICLE_CORNER_ORDER.
    """
    xf = params.front_overhang + params.wheel_base
    xr = -params.rear_overhang
    hw = params.width / 2.0
    local = np.array([[xf, hw], [xr, hw], [xr, -hw], [xf, -hw]])
    c, s = math.cos(q.theta), math.sin(q.theta)
    R = np.array([[c, -s], [s, c]])
    return ConvexPolytope(local @ R.T + np.array([q.x, q.y]))


def vehicle_center_rect(params: VehicleParams) -> ConvexPolytope:
    """Footprint rectangle in the vehicle-center frame (origin strictly inside)."""
    hl = params.length / 2.0
    hw = params.width / 2.0
    return ConvexPolytope(np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]]))


def triangle_area(p1, p2, p3) -> float:
    """Nonnegative triangle area by the absolute shoelace value."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    p3 = np.asarray(p3, dtype=float)
    cross = (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p3[0] - p1[0]) * (p2[1] - p1[1])
    return abs(cross) / 2.0


def polygon_area(points: np.ndarray) -> float:
    """Signed shoelace area; positive for counterclockwise order."""
    pts = np.asarray(points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def is_convex_ccw(points: np.ndarray, tol: float = 1e-12) -> bool:
    """True iff the points form a strictly convex counterclockwise polygon."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if n < 3:
        return False
    e = np.roll(pts, -1, axis=0) - pts
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    return bool(np.all(cross > tol))


def _validate_sat_polygon(poly: ConvexPolytope, name: str) -> np.ndarray:
    if poly.dim != 2:
        raise ValueError(f"{name}: SAT oracle handles planar polygons only")
    pts = poly.points
    if pts.shape[0] < 3:
        raise DegeneratePolygonError(f"{name}: polygon needs at least 3 vertices")
    area = polygon_area(pts)
    if abs(area) < 1e-14:
        raise DegeneratePolygonError(f"{name}: zero-area polygon")
    if area < 0.0:
        raise ValueError(f"{name}: polygon must be counterclockwise")
    return pts


def _sat_polygons_disjoint(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons (>= 3 vertices each)."""
    axes = []
    for pts in (a, b):
        e = np.roll(pts, -1, axis=0) - pts
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)
        ln = np.linalg.norm(n, axis=1)
        m = ln > 1e-15
        axes.append(n[m] / ln[m, None])
    axes = np.vstack(axes)
    pa = a @ axes.T
    pb = b @ axes.T
    gap = np.maximum(pb.min(axis=0) - pa.max(axis=0), pa.min(axis=0) - pb.max(axis=0))
    return bool(np.max(gap) > 0.0)


def _point_in_convex(p: np.ndarray, poly: np.ndarray) -> bool:
    """Closed-set membership in a convex polygon, orientation-agnostic."""
    e = np.roll(poly, -1, axis=0) - poly
    r = p[None, :] - poly
    cross = e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0]
    return bool(np.all(cross >= -1e-14) or np.all(cross <= 1e-14))


def _segments_cross(p0, p1, q0, q1) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > 1e-14:
            return 1
        if v < -1e-14:
            return -1
        return 0

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) - 1e-14 <= c[0] <= max(a[0], b[0]) + 1e-14
            and min(a[1], b[1]) - 1e-14 <= c[1] <= max(a[1], b[1]) + 1e-14
        )

    o1, o2 = orient(p0, p1, q0), orient(p0, p1, q1)
    o3, o4 = orient(q0, q1, p0), orient(q0, q1, p1)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p0, p1, q0):
        return True
    if o2 == 0 and on_seg(p0, p1, q1):
        return True
    if o3 == 0 and on_seg(q0, q1, p0):
        return True
    if o4 == 0 and on_seg(q0, q1, p1):
        return True
    return False


def _disjoint_point_sets(a: np.ndarray, b: np.ndarray) -> bool:
    """Disjointness of convex hulls of two point sets; degenerate sets allowed."""
    if a.shape[0] < b.shape[0]:
        a, b = b, a
    na, nb = a.shape[0], b.shape[0]
    if na >= 3 and nb >= 3:
        return _sat_polygons_disjoint(a, b)
    if nb == 1:
        p = b[0]
        if na == 1:
            return not np.array_equal(a[0], p)
        if na == 2:
            return _point_segment_distance(p, a[0], a[1]) > 0.0
        return not _point_in_convex(p, a)
    # b is a segment
    if na == 2:
        return not _segments_cross(a[0], a[1], b[0], b[1])
    if _point_in_convex(b[0], a) or _point_in_convex(b[1], a):
        return False
    for i in range(na):
        if _segments_cross(a[i], a[(i + 1) % na], b[0], b[1]):
            return False
    return True


def _point_segment_distance(p: np.ndarray, s0: np.ndarray, s1: np.ndarray) -> float:
    d = s1 - s0
    dd = float(d @ d)
    if dd < 1e-30:
        return float(np.linalg.norm(p - s0))
    t = float((p - s0) @ d) / dd
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(p - (s0 + t * d)))


def _min_feature_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Closest vertex-edge / vertex-vertex distance between two point sets."""
    best = math.inf
    for pts, other in ((a, b), (b, a)):
        n = other.shape[0]
        for p in pts:
            if n == 1:
                best = min(best, float(np.linalg.norm(p - other[0])))
            else:
                for i in range(n):
                    best = min(best, _point_segment_distance(p, other[i], other[(i + 1) % n]))
    return best


def sat_disjoint(a: ConvexPolytope, b: ConvexPolytope) -> tuple[bool, float]:
    """Separating-axis disjointness with exact Euclidean clearance.

    Returns (disjoint, clearance).  Clearance is the separation distance
    computed from closest vertex-edge/vertex-vertex features when disjoint,
    0 otherwise.  Both inputs must be counterclockwise positive-area polygons.
    """
    pa = _validate_sat_polygon(a, "a")
    pb = _validate_sat_polygon(b, "b")
    if not _disjoint_point_sets(pa, pb):
        return False, 0.0
    return True, _min_feature_distance(pa, pb)


def separation(a_points: np.ndarray, b_points: np.ndarray) -> tuple[bool, float]:
    """Degenerate-tolerant disjointness + clearance for raw convex point sets.

    Accepts single points and segments (needed by the shrink oracle where one
    body collapses toward the origin).  Orientation of polygon inputs is not
    checked.
    """
    a = np.asarray(a_points, dtype=float)
    b = np.asarray(b_points, dtype=float)
    if not _disjoint_point_sets(a, b):
        return False, 0.0
    return True, _min_feature_distance(a, b)
