"""Omnidirectional drive: base twist to per-wheel steering and spin.

Foot velocities follow the planar rigid-body field of the commanded base
twist; each wheel is steered along its foot velocity and spun at
speed/radius. Steering angles are kept continuous across updates: the wheel
may run backwards (flipped axis, negative spin) when that is the shorter
steering move.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .transforms import Pose6D, quat_from_axis_angle, quat_multiply, wrap_angle

V_MAX_DEFAULT = 1.0  # m/s
OMEGA_MAX_DEFAULT = 1.0  # rad/s
STEER_DEADBAND = 1e-4  # m/s: below this the last steering angle is held


@dataclass
class BaseTwist:
    """Planar base velocity command (vx, vy), yaw rate, joint scale in [0,1]."""

    vx: float = 0.0
    vy: float = 0.0
    vtheta: float = 0.0
    scale: float = 1.0

    def clamp(self, v_max: float = V_MAX_DEFAULT, omega_max: float = OMEGA_MAX_DEFAULT):
        """Saturate to operator-interface limits. Applied at the teleop boundary."""
        self.vx = float(np.clip(self.vx, -v_max, v_max))
        self.vy = float(np.clip(self.vy, -v_max, v_max))
        self.vtheta = float(np.clip(self.vtheta, -omega_max, omega_max))
        self.scale = float(np.clip(self.scale, 0.0, 1.0))
        return self

    @property
    def is_zero(self) -> bool:
        return self.vx == 0.0 and self.vy == 0.0 and self.vtheta == 0.0

    def scaled(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vtheta]) * self.scale


@dataclass
class WheelCommand:
    """Per-foot steering angle (base frame, unwrapped) and signed spin rate."""

    steering: np.ndarray  # (4,) rad
    spin: np.ndarray  # (4,) rad/s
    foot_velocities: np.ndarray  # (4, 2) m/s, the underlying twist field

    def copy(self) -> "WheelCommand":
        return WheelCommand(self.steering.copy(), self.spin.copy(),
                            self.foot_velocities.copy())


def foot_velocity_field(twist: BaseTwist, foot_positions: np.ndarray) -> np.ndarray:
    """Planar velocity of each foot point under the (scaled) base twist."""
    p = np.asarray(foot_positions, dtype=float).reshape(-1, 2)
    vx, vy, w = twist.scaled()
    return np.column_stack([vx - w * p[:, 1], vy + w * p[:, 0]])


def twist_to_wheels(twist: BaseTwist, foot_positions: np.ndarray, wheel_radius: float,
                    prev_steering: np.ndarray | None = None) -> WheelCommand:
    """Steering angles and spin rates realizing the base twist.

    ``prev_steering`` keeps angles continuous: the new angle is chosen among
    the two equivalent solutions (theta with +speed, theta+pi with -speed)
    and unwrapped to stay within pi of the previous value. Feet moving slower
    than the deadband hold their previous angle with zero spin.
    """
    if wheel_radius <= 0.0:
        raise ValueError("wheel radius must be positive")
    vel = foot_velocity_field(twist, foot_positions)
    n = vel.shape[0]
    prev = np.zeros(n) if prev_steering is None else np.asarray(prev_steering, dtype=float)
    steering = np.empty(n)
    spin = np.empty(n)
    speed = np.linalg.norm(vel, axis=1)
    for i in range(n):
        if speed[i] < STEER_DEADBAND:
            steering[i] = prev[i]
            spin[i] = 0.0
            continue
        raw = np.arctan2(vel[i, 1], vel[i, 0])
        fwd_delta = wrap_angle(raw - prev[i])
        rev_delta = wrap_angle(raw + np.pi - prev[i])
        if abs(fwd_delta) <= abs(rev_delta):
            steering[i] = prev[i] + fwd_delta
            spin[i] = speed[i] / wheel_radius
        else:
            steering[i] = prev[i] + rev_delta
            spin[i] = -speed[i] / wheel_radius
    return WheelCommand(steering, spin, vel)


def wheels_to_twist(cmd: WheelCommand, foot_positions: np.ndarray,
                    wheel_radius: float) -> np.ndarray:
    """Least-squares planar twist (vx, vy, vtheta) from wheel commands."""
    p = np.asarray(foot_positions, dtype=float).reshape(-1, 2)
    v = np.stack([cmd.spin * wheel_radius * np.cos(cmd.steering),
                  cmd.spin * wheel_radius * np.sin(cmd.steering)], axis=1)
    n = p.shape[0]
    A = np.zeros((2 * n, 3))
    A[0::2, 0] = 1.0
    A[0::2, 2] = -p[:, 1]
    A[1::2, 1] = 1.0
    A[1::2, 2] = p[:, 0]
    sol, *_ = np.linalg.lstsq(A, v.reshape(-1), rcond=None)
    return sol


def integrate_base(pose: Pose6D, twist: BaseTwist, dt: float) -> Pose6D:
    """Advance a planar base pose by the twist exponential over dt.

    Exact integration: constant twists trace circular arcs, not Euler
    polygons. Only x, y and yaw change; z/roll/pitch are preserved.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    vx, vy, w = twist.scaled()
    theta = pose.yaw()
    wt = w * dt
    if abs(w) < 1e-12:
        dx_b = vx * dt
        dy_b = vy * dt
    else:
        s, c = np.sin(wt), np.cos(wt)
        dx_b = (vx * s + vy * (c - 1.0)) / w
        dy_b = (vx * (1.0 - c) + vy * s) / w
    ct, st = np.cos(theta), np.sin(theta)
    new_pos = pose.position + np.array([ct * dx_b - st * dy_b,
                                        st * dx_b + ct * dy_b, 0.0])
    new_q = quat_multiply(quat_from_axis_angle([0, 0, 1], wt), pose.orientation)
    return Pose6D(new_pos, new_q)


@dataclass
class OmnidriveController:
    """Holds steering continuity state across control ticks."""

    wheel_radius: float
    last_steering: np.ndarray = field(default_factory=lambda: np.zeros(4))
    steer_rate_limit: float | None = None  # rad/s, None = instantaneous

    def update(self, twist: BaseTwist, foot_positions: np.ndarray,
               dt: float | None = None) -> WheelCommand:
        cmd = twist_to_wheels(twist, foot_positions, self.wheel_radius,
                              prev_steering=self.last_steering)
        if self.steer_rate_limit is not None and dt is not None:
            max_step = self.steer_rate_limit * dt
            delta = np.clip(cmd.steering - self.last_steering, -max_step, max_step)
            cmd.steering = self.last_steering + delta
        self.last_steering = cmd.steering.copy()
        return cmd
