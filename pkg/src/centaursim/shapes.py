"""Parametric drill-like object family used for grasp training and scenes.

Shape: box body, cylindrical barrel along +x, cylindrical handle up from the
body top. Every instance samples the same surface parameterization, so
point i corresponds across instances; that gives analytic ground truth for
registration experiments. The primitive list drives ray casting and
occupancy in the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .transforms import Pose6D, quat_rotate

PARAM_RANGES = {
    "body_lx": (0.13, 0.19),
    "body_ly": (0.05, 0.075),
    "body_lz": (0.055, 0.085),
    "barrel_radius": (0.014, 0.022),
    "barrel_length": (0.08, 0.12),
    "handle_radius": (0.016, 0.028),
    "handle_length": (0.09, 0.15),
}


@dataclass(frozen=True)
class DrillParams:
    body_lx: float
    body_ly: float
    body_lz: float
    barrel_radius: float
    barrel_length: float
    handle_radius: float
    handle_length: float

    @property
    def handle_x(self) -> float:
        return -self.body_lx / 8.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DrillParams":
        return cls(**d)


def canonical_params() -> DrillParams:
    return DrillParams(**{k: 0.5 * (lo + hi) for k, (lo, hi) in PARAM_RANGES.items()})


def sample_params(rng: np.random.Generator, spread: float = 1.0) -> DrillParams:
    vals = {}
    for k, (lo, hi) in PARAM_RANGES.items():
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo) * spread
        vals[k] = float(rng.uniform(mid - half, mid + half))
    return DrillParams(**vals)


def scaled_params(scale: float) -> DrillParams:
    """Uniformly scaled canonical shape (a 1-parameter family)."""
    c = canonical_params()
    return DrillParams(**{k: v * scale for k, v in c.to_dict().items()})


def _box_face_points(n_u: int, n_v: int):
    u = (np.arange(n_u) + 0.5) / n_u - 0.5
    v = (np.arange(n_v) + 0.5) / n_v - 0.5
    return np.array([(a, b) for a in u for b in v])


def drill_points(p: DrillParams) -> np.ndarray:
    """Consistently ordered surface sampling (same index = same surface spot)."""
    pts = []
    face = _box_face_points(5, 5)
    dims = np.array([p.body_lx, p.body_ly, p.body_lz])
    # box faces: +-x, +-y, +-z
    for axis in range(3):
        for sign in (1.0, -1.0):
            o = [0, 1, 2]
            o.remove(axis)
            for a, b in face:
                q = np.zeros(3)
                q[axis] = sign * 0.5
                q[o[0]] = a
                q[o[1]] = b
                pts.append(q * dims)
    # barrel along +x from the body front face
    angles = 2 * np.pi * np.arange(10) / 10
    x0 = p.body_lx / 2
    for i in range(7):
        x = x0 + p.barrel_length * (i + 0.5) / 7
        for a in angles:
            pts.append([x, p.barrel_radius * np.cos(a), p.barrel_radius * np.sin(a)])
    tip = x0 + p.barrel_length
    pts.append([tip, 0.0, 0.0])
    for a in angles:
        pts.append([tip, 0.55 * p.barrel_radius * np.cos(a),
                    0.55 * p.barrel_radius * np.sin(a)])
    # handle up from the body top
    z0 = p.body_lz / 2
    for i in range(7):
        z = z0 + p.handle_length * (i + 0.5) / 7
        for a in angles:
            pts.append([p.handle_x + p.handle_radius * np.cos(a),
                        p.handle_radius * np.sin(a), z])
    top = z0 + p.handle_length
    pts.append([p.handle_x, 0.0, top])
    for a in angles:
        pts.append([p.handle_x + 0.55 * p.handle_radius * np.cos(a),
                    0.55 * p.handle_radius * np.sin(a), top])
    return np.asarray(pts)


# -- primitives (shared by ray casting and occupancy) -------------------------


@dataclass
class BoxPrimitive:
    center: np.ndarray
    half_extents: np.ndarray

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = np.abs(np.atleast_2d(pts) - self.center) <= self.half_extents + 1e-12
        return d.all(axis=1)


@dataclass
class CylinderPrimitive:
    base: np.ndarray  # center of the bottom cap
    axis: np.ndarray  # unit vector
    length: float
    radius: float

    def contains(self, pts: np.ndarray) -> np.ndarray:
        rel = np.atleast_2d(pts) - self.base
        t = rel @ self.axis
        radial = rel - np.outer(t, self.axis)
        return (t >= -1e-12) & (t <= self.length + 1e-12) & \
            (np.linalg.norm(radial, axis=1) <= self.radius + 1e-12)


def drill_primitives(p: DrillParams) -> list:
    return [
        BoxPrimitive(np.zeros(3),
                     np.array([p.body_lx, p.body_ly, p.body_lz]) / 2),
        CylinderPrimitive(np.array([p.body_lx / 2, 0.0, 0.0]),
                          np.array([1.0, 0.0, 0.0]), p.barrel_length, p.barrel_radius),
        CylinderPrimitive(np.array([p.handle_x, 0.0, p.body_lz / 2]),
                          np.array([0.0, 0.0, 1.0]), p.handle_length, p.handle_radius),
    ]


def drill_grasp_annotations(p: DrillParams) -> list[dict]:
    """Named grasp/pre-grasp/approach poses in the object frame.

    Tool z points down onto the handle top; x stays aligned with the barrel.
    """
    from .transforms import quat_from_axis_angle

    top = p.body_lz / 2 + p.handle_length
    grasp_pos = np.array([p.handle_x, 0.0, top - 0.35 * p.handle_length])
    # tool z = -z_object, tool x = +x_object: rotate pi about x
    q = quat_from_axis_angle([1.0, 0.0, 0.0], np.pi)
    return [{
        "name": "handle_top",
        "poses": {
            "grasp": Pose6D(grasp_pos, q),
            "pre_grasp": Pose6D(grasp_pos + [0.0, 0.0, 0.10], q),
            "approach": Pose6D(grasp_pos + [0.0, 0.0, 0.18], q),
        },
    }]


def transform_points(points: np.ndarray, pose: Pose6D) -> np.ndarray:
    return pose.position + quat_rotate(pose.orientation, points)
