"""Built-in parking scenarios and scenario-file (de)serialization.

Twelve parking cases (four obstacle layouts, three initial configurations
each) plus the narrow-passage traversal task.  Obstacles are vehicle-sized
rectangles given by corner-anchored poses; the anchored corner leaves a
180-degree placement ambiguity per obstacle, resolved here computationally:
the first placement, in a fixed preference order, that keeps every case's
initial footprint collision-free and leaves the terminal window reachable.
The resolved tags are frozen below and re-derived by the test suite.

Scenario-file angles are degrees; everything is radians internally.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from .geometry import ConvexPolytope, Pose2, VehicleParams
from .ocp import ParkingBounds
from .scenario import BompConfig, Scenario

__all__ = [
    "BUILTIN_IDS",
    "builtin_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
    "load_scenario",
    "save_scenario",
    "SCENARIO_SCHEMA",
    "corner_rect",
]

# Obstacle poses (x, y, theta_degrees) per layout.
_OBSTACLES = {
    "S1": [(-5.6, 0.6, -10.0), (5.8, -0.5, 13.0)],
    "S2": [(-7.0, 2.8, -55.0), (5.8, -0.5, 13.0)],
    "S3": [(-2.2, 0.4, 0.0), (2.3, 0.3, -5.0)],
    "S4": [(-6.3, 0.3, 20.0), (6.8, -1.0, 40.0), (2.0, 3.6, 60.0), (-1.5, -2.2, -3.0)],
}

# Initial configurations (x, y, theta_degrees) per case.
_CASES = {
    "S1": {"C1": (-6.0, -2.75, 0.0), "C2": (0.0, -2.75, 0.0), "C3": (0.0, -2.75, 180.0)},
    "S2": {"C1": (-6.0, -2.0, 0.0), "C2": (-8.0, 0.0, -30.0), "C3": (-4.0, -3.0, -36.0)},
    "S3": {"C1": (-6.0, -2.0, 0.0), "C2": (1.0, -2.0, 0.0), "C3": (-3.0, -2.0, 180.0)},
    "S4": {"C1": (-5.0, 7.5, 0.0), "C2": (-5.0, 5.0, -10.0), "C3": (-1.0, 6.0, 0.0)},
}

# Resolved corner placements (see module docstring and the scenario tests).
_PLACEMENTS = {
    "S1": ("RR", "RL"),
    "S2": ("FL", "RL"),
    "S3": ("FR", "RR"),
    "S4": ("RL", "RL", "RL", "RL"),
}

# Spot-bay frame per layout: the third layout is a perpendicular bay entered
# across the street direction; the others keep the spot frame at the origin.
_SPOT_POSES = {"S3": (2.5, 0.0, 90.0)}

BUILTIN_IDS = tuple(
    f"{s}{c}" for s in ("S1", "S2", "S3", "S4") for c in ("C1", "C2", "C3")
) + ("S3T",)


def corner_rect(params: VehicleParams, tag: str) -> ConvexPolytope:
    """Vehicle-sized rectangle anchored at one corner, counterclockwise.

    Tags pick the quadrant the body occupies relative to the anchored
    corner: RL -> (+x, -y), RR -> (+x, +y), FL -> (-x, -y), FR -> (-x, +y).
    """
    L, W = params.length, params.width
    quads = {
        "RL": [(0.0, 0.0), (0.0, -W), (L, -W), (L, 0.0)],
        "RR": [(0.0, 0.0), (L, 0.0), (L, W), (0.0, W)],
        "FL": [(0.0, 0.0), (-L, 0.0), (-L, -W), (0.0, -W)],
        "FR": [(0.0, 0.0), (0.0, W), (-L, W), (-L, 0.0)],
    }
    if tag not in quads:
        raise ValueError(f"unknown corner tag {tag!r}")
    return ConvexPolytope(np.array(quads[tag]))


def _pose_deg(x: float, y: float, theta_deg: float) -> Pose2:
    return Pose2(x, y, math.radians(theta_deg))


def builtin_scenario(case_id: str) -> Scenario:
    """One of S1C1..S4C3, or S3T (the narrow-passage traversal task)."""
    if case_id not in BUILTIN_IDS:
        raise KeyError(f"unknown builtin scenario {case_id!r}")
    veh = VehicleParams()
    bounds = ParkingBounds()
    if case_id == "S3T":
        sid = "S3"
        initial = Pose2(1.0, -2.0, 0.0)
        goal = Pose2(1.0, 10.0, math.pi / 2.0)
    else:
        sid, cid = case_id[:2], case_id[2:]
        initial = _pose_deg(*_CASES[sid][cid])
        goal = None
    obstacles = [
        (corner_rect(veh, tag), _pose_deg(*pose))
        for tag, pose in zip(_PLACEMENTS[sid], _OBSTACLES[sid])
    ]
    spot = _pose_deg(*_SPOT_POSES[sid]) if sid in _SPOT_POSES else None
    return Scenario(
        vehicle=veh,
        bounds=bounds,
        obstacles=obstacles,
        initial_pose=initial,
        goal_pose=goal,
        spot_pose=spot,
        name=case_id,
    )


SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "vehicle": {
            "type": "object",
            "properties": {
                "wheel_base": {"type": "number", "exclusiveMinimum": 0},
                "front_overhang": {"type": "number", "exclusiveMinimum": 0},
                "rear_overhang": {"type": "number", "exclusiveMinimum": 0},
                "width": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "bounds": {
            "type": "object",
            "properties": {
                "v_max": {"type": "number", "exclusiveMinimum": 0},
                "alpha_max": {"type": "number", "exclusiveMinimum": 0},
                "omega_max": {"type": "number", "exclusiveMinimum": 0},
                "eps_p": {"type": "number", "exclusiveMinimum": 0},
                "eps_theta": {"type": "number", "exclusiveMinimum": 0},
                "spot_length": {"type": "number", "exclusiveMinimum": 0},
                "spot_width": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "obstacles": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "points": {
                        "type": "array",
                        "minItems": 3,
                        "items": {
                            "type": "array",
                            "minItems": 2,
                            "maxItems": 2,
                            "items": {"type": "number"},
                        },
                    },
                    "vehicle_rect": {"type": "string", "enum": ["RL", "RR", "FL", "FR"]},
                    "pose": {
                        "type": "array",
                        "minItems": 3,
                        "maxItems": 3,
                        "items": {"type": "number"},
                    },
                },
                "required": ["pose"],
                "oneOf": [{"required": ["points"]}, {"required": ["vehicle_rect"]}],
            },
        },
        "initial_pose": {
            "type": "array",
            "minItems": 3,
            "maxItems": 3,
            "items": {"type": "number"},
        },
        "goal_pose": {
            "type": "array",
            "minItems": 3,
            "maxItems": 3,
            "items": {"type": "number"},
        },
        "spot_pose": {
            "type": "array",
            "minItems": 3,
            "maxItems": 3,
            "items": {"type": "number"},
        },
        "config": {"type": "object"},
    },
    "required": ["obstacles", "initial_pose"],
    "additionalProperties": False,
}

_CONFIG_FIELDS = (
    "delta",
    "epsilon_sequence",
    "j_active",
    "nodes_stage1",
    "nodes_stage2",
    "t_f_guess",
    "t_f_min",
    "t_f_max",
    "xy_box",
    "theta_box",
    "terminal_margin",
    "verify_subdivisions",
    "ac_threshold",
    "circle_radius",
    "n_circles",
)


def scenario_to_dict(scenario: Scenario, config: BompConfig | None = None) -> dict:
    """JSON-ready document; angles serialized in degrees."""

    def pose_out(p: Pose2):
        return [p.x, p.y, math.degrees(p.theta)]

    doc = {
        "name": scenario.name,
        "vehicle": asdict(scenario.vehicle),
        "bounds": asdict(scenario.bounds),
        "obstacles": [
            {"points": poly.points.tolist(), "pose": pose_out(pose)}
            for poly, pose in scenario.obstacles
        ],
        "initial_pose": pose_out(scenario.initial_pose),
    }
    if scenario.goal_pose is not None:
        doc["goal_pose"] = pose_out(scenario.goal_pose)
    if scenario.spot_pose is not None:
        doc["spot_pose"] = pose_out(scenario.spot_pose)
    if config is not None:
        cfg = {f: getattr(config, f) for f in _CONFIG_FIELDS}
        cfg["epsilon_sequence"] = list(cfg["epsilon_sequence"])
        doc["config"] = cfg
    return doc


def scenario_from_dict(doc: dict) -> tuple[Scenario, BompConfig]:
    """Validate against the schema, fill defaults, convert degrees."""
    if jsonschema is not None:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    veh = VehicleParams(**doc.get("vehicle", {}))
    bounds = ParkingBounds(**doc.get("bounds", {}))

    def pose_in(arr):
        return _pose_deg(float(arr[0]), float(arr[1]), float(arr[2]))

    obstacles = []
    for item in doc["obstacles"]:
        if "points" in item:
            poly = ConvexPolytope(np.asarray(item["points"], dtype=float))
        else:
            poly = corner_rect(veh, item["vehicle_rect"])
        obstacles.append((poly, pose_in(item["pose"])))
    cfg_doc = dict(doc.get("config", {}))
    if "epsilon_sequence" in cfg_doc:
        cfg_doc["epsilon_sequence"] = tuple(cfg_doc["epsilon_sequence"])
    unknown = set(cfg_doc) - set(_CONFIG_FIELDS)
    if unknown:
        raise ValueError(f"unknown config overrides: {sorted(unknown)}")
    config = BompConfig(**cfg_doc)
    scenario = Scenario(
        vehicle=veh,
        bounds=bounds,
        obstacles=obstacles,
        initial_pose=pose_in(doc["initial_pose"]),
        goal_pose=pose_in(doc["goal_pose"]) if "goal_pose" in doc else None,
        spot_pose=pose_in(doc["spot_pose"]) if "spot_pose" in doc else None,
        name=str(doc.get("name", "scenario")),
    )
    return scenario, config


def load_scenario(path) -> tuple[Scenario, BompConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(path, scenario: Scenario, config: BompConfig | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario, config), fh, indent=2)
        fh.write("\n")
