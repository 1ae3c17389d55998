"""Quaternion and rigid-transform math used throughout the stack.

Quaternions are stored scalar-last [x, y, z, w]. Twists and wrenches are
6-vectors with the linear part first: (vx, vy, vz, wx, wy, wz).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9


def quat_identity() -> np.ndarray:
    return np.array([0.0, 0.0, 0.0, 1.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("cannot normalize zero quaternion")
    return q / n


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a*b (rotation b applied first, then a)."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def quat_conjugate(q) -> np.ndarray:
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector(s) v by quaternion q. v may be (3,) or (N, 3)."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(q[:3])
    w = q[3]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    half = 0.5 * angle
    return np.concatenate([np.sin(half) * axis / n, [np.cos(half)]])


def quat_from_rotvec(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    angle = np.linalg.norm(r)
    if angle < 1e-12:
        # second-order small-angle expansion keeps this C1 near zero
        return quat_normalize(np.concatenate([0.5 * r, [1.0]]))
    return quat_from_axis_angle(r / angle, angle)


def quat_to_rotvec(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q[3] < 0.0:
        q = -q
    s = np.linalg.norm(q[:3])
    if s < 1e-12:
        return 2.0 * q[:3]
    angle = 2.0 * np.arctan2(s, q[3])
    return q[:3] * (angle / s)


def quat_to_matrix(q) -> np.ndarray:
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    return quat_normalize([x, y, z, w])


def quat_angle_between(a, b) -> float:
    """Geodesic angle in radians between two unit quaternions."""
    d = quat_multiply(a, quat_conjugate(b))
    return 2.0 * float(np.arctan2(np.linalg.norm(d[:3]), abs(d[3])))


def nearest_rotation(m) -> np.ndarray:
    """Project a 3x3 matrix to the nearest proper rotation (Frobenius sense)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = (a + np.pi) % (2.0 * np.pi) - np.pi
    if a == -np.pi:
        a = np.pi
    return a


@dataclass
class Pose6D:
    """Rigid transform: rotation (unit quaternion) plus translation in meters."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n:.3e} too far from 1")
        if abs(n - 1.0) > QUAT_NORM_TOL:
            q = q / n
        self.orientation = q

    @classmethod
    def identity(cls) -> "Pose6D":
        return cls()

    @classmethod
    def from_xyz_rpy(cls, xyz, rpy) -> "Pose6D":
        roll, pitch, yaw = rpy
        q = quat_multiply(
            quat_from_axis_angle([0, 0, 1], yaw),
            quat_multiply(
                quat_from_axis_angle([0, 1, 0], pitch),
                quat_from_axis_angle([1, 0, 0], roll),
            ),
        )
        return cls(np.asarray(xyz, dtype=float), q)

    @classmethod
    def from_matrix(cls, m) -> "Pose6D":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, 3], matrix_to_quat(m[:3, :3]))

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.orientation)
        m[:3, 3] = self.position
        return m

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def compose(self, other: "Pose6D") -> "Pose6D":
        """self * other: apply other in self's frame."""
        return Pose6D(
            self.position + quat_rotate(self.orientation, other.position),
            quat_normalize(quat_multiply(self.orientation, other.orientation)),
        )

    def inverse(self) -> "Pose6D":
        qi = quat_conjugate(self.orientation)
        return Pose6D(-quat_rotate(qi, self.position), qi)

    def transform_point(self, p) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, p)

    def yaw(self) -> float:
        """Heading about +z of the rotated x axis."""
        ex = quat_rotate(self.orientation, [1.0, 0.0, 0.0])
        return float(np.arctan2(ex[1], ex[0]))

    def copy(self) -> "Pose6D":
        return Pose6D(self.position.copy(), self.orientation.copy())

    def almost_equal(self, other: "Pose6D", pos_tol=1e-9, rot_tol=1e-9) -> bool:
        return (
            np.linalg.norm(self.position - other.position) <= pos_tol
            and quat_angle_between(self.orientation, other.orientation) <= rot_tol
        )

    def to_dict(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "orientation": [float(v) for v in self.orientation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pose6D":
        return cls(np.array(d["position"]), np.array(d["orientation"]))


def pose_error(target: Pose6D, current: Pose6D) -> tuple[np.ndarray, np.ndarray]:
    """Return (position error, rotation-vector error) taking current to target."""
    dp = target.position - current.position
    dq = quat_multiply(target.orientation, quat_conjugate(current.orientation))
    return dp, quat_to_rotvec(dq)
