"""Foot contact estimation and static stability.

Foot wrenches are recovered from measured leg joint torques through the
transpose-Jacobian map after subtracting the static gravity torques of the
leg's own links; with 5 joints the result is the minimum-norm wrench
consistent with the measurements. Contact detection latches with
hysteresis. The stability margin is the signed distance of the CoM ground
projection to the support polygon boundary (positive inside).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import JointState, RobotModel, limb_gravity_torques, limb_jacobian

CONTACT_RELEASE_FRACTION = 0.7  # hysteresis: OFF below 0.7 * threshold


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def default_contact_threshold(model: RobotModel) -> float:
    """0.1 x (weight per foot): ~22.6 N for the 92 kg default model."""
    from .model import GRAVITY
    return 0.1 * model.total_mass * GRAVITY / 4.0


@dataclass
class ContactEstimate:
    wrench: np.ndarray  # 6D (force, torque) applied by the ground to the foot
    vertical_force: float  # gravity-compensated fz, N
    contact: bool
    threshold: float
    reliable: bool = True


def estimate_foot_wrench(model: RobotModel, q: JointState, leg: str,
                         torques: np.ndarray) -> tuple[np.ndarray, bool]:
    """Minimum-norm foot wrench explaining the measured holding torques.

    ``torques`` are the actuator holding torques of the leg chain joints.
    Returns (wrench, reliable); ``reliable`` is False when the leg Jacobian
    is rank-deficient (stretched leg) and the estimate is not trustworthy.
    """
    torques = np.asarray(torques, dtype=float)
    J = limb_jacobian(model, q, leg)
    g = limb_gravity_torques(model, q, leg)
    svals = np.linalg.svd(J, compute_uv=False)
    reliable = bool(svals[-1] >= 1e-8)
    wrench = np.linalg.pinv(J.T) @ (torques - g)
    return wrench, reliable


def foot_torques_for_wrench(model: RobotModel, q: JointState, leg: str,
                            wrench: np.ndarray) -> np.ndarray:
    """Holding torques a leg measures while its foot carries ``wrench``.

    Inverse of estimate_foot_wrench; the simulator uses this to synthesize
    torque measurements.
    """
    J = limb_jacobian(model, q, leg)
    g = limb_gravity_torques(model, q, leg)
    return g + J.T @ np.asarray(wrench, dtype=float)


class ContactDetector:
    """Hysteresis latch per foot: ON above threshold, OFF below 0.7x."""

    def __init__(self, threshold: float, feet: list[str]):
        if threshold <= 0.0:
            raise ValueError("contact threshold must be positive")
        self.threshold = threshold
        self.state = {f: False for f in feet}

    def update(self, foot: str, vertical_force: float) -> bool:
        if self.state[foot]:
            if vertical_force < CONTACT_RELEASE_FRACTION * self.threshold:
                self.state[foot] = False
        else:
            if vertical_force > self.threshold:
                self.state[foot] = True
        return self.state[foot]

    def snapshot(self) -> dict[str, bool]:
        return dict(self.state)


def detect_contact(detector: ContactDetector, foot: str, wrench: np.ndarray) -> bool:
    return detector.update(foot, float(wrench[2]))


# -- support polygon geometry -------------------------------------------------


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Convex hull (CCW, no repeated endpoint) by Andrew's monotone chain."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross2(out[-1] - out[-2], p - out[-2]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def signed_margin(point: np.ndarray, hull: np.ndarray) -> float:
    """Signed distance of a point to a CCW convex polygon boundary.

    Positive inside, negative outside, 0 on an edge.
    """
    point = np.asarray(point, dtype=float)
    n = len(hull)
    if n < 3:
        raise ValueError("support polygon is degenerate (fewer than 3 hull vertices)")
    edge_dists = []
    inside = True
    for i in range(n):
        a = hull[i]
        b = hull[(i + 1) % n]
        e = b - a
        ln = np.linalg.norm(e)
        perp = _cross2(e, point - a) / ln  # positive when left of the edge (inside)
        edge_dists.append(perp)
        if perp < 0:
            inside = False
    if inside:
        return float(min(edge_dists))
    # outside: distance to nearest boundary segment
    best = np.inf
    for i in range(n):
        a = hull[i]
        b = hull[(i + 1) % n]
        e = b - a
        t = np.clip(np.dot(point - a, e) / np.dot(e, e), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(point - (a + t * e))))
    return -best


@dataclass
class SupportState:
    """Contact set, support polygon and CoM stability margin."""

    contact_feet: list[str]
    polygon: np.ndarray  # CCW hull vertices (k, 2)
    com_projection: np.ndarray  # (2,)
    margin: float | None  # None when fewer than 3 contacts

    @property
    def stable(self) -> bool:
        return self.margin is not None and self.margin > 0.0


def support_state(contact_points: dict[str, np.ndarray], com: np.ndarray) -> SupportState:
    """Build the support state from per-foot ground contact points (world xy)."""
    feet = sorted(contact_points)
    com_xy = np.asarray(com, dtype=float)[:2]
    if len(feet) < 3:
        return SupportState(feet, np.zeros((0, 2)), com_xy, None)
    pts = np.array([np.asarray(contact_points[f])[:2] for f in feet])
    hull = convex_hull_2d(pts)
    if len(hull) < 3:
        return SupportState(feet, hull, com_xy, None)
    return SupportState(feet, hull, com_xy, signed_margin(com_xy, hull))
