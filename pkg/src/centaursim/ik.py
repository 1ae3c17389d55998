"""Damped least-squares inverse kinematics and the axis-masked wrist interface."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import JointState, RobotModel, forward_kinematics
from .transforms import (
    Pose6D,
    matrix_to_quat,
    quat_from_rotvec,
    quat_multiply,
    quat_rotate,
    quat_to_matrix,
    quat_to_rotvec,
)

DLS_LAMBDA = 0.01
SINGULARITY_THRESHOLD = 0.05
MAX_STEP = 0.3  # rad, per-iteration infinity-norm cap
DEFAULT_POS_TOL = 1e-5  # m
DEFAULT_ROT_TOL = 1e-4  # rad

WRIST_LINEAR_SPEED = 0.25  # m/s at scale 1
WRIST_ANGULAR_SPEED = 1.0  # rad/s at scale 1


class IKError(RuntimeError):
    def __init__(self, message, group=None, residual=None):
        super().__init__(message)
        self.group = group
        self.residual = residual


@dataclass
class IKResult:
    positions: np.ndarray
    converged: bool
    pos_residual: float
    rot_residual: float
    iterations: int


def solve_ik(model: RobotModel, group: str, target: Pose6D, seed: JointState,
             mask: np.ndarray | None = None, pos_tol: float = DEFAULT_POS_TOL,
             rot_tol: float = DEFAULT_ROT_TOL, max_iters: int = 200) -> IKResult:
    """Damped least-squares IK for one limb.

    ``mask`` selects the controlled task axes (linear xyz, angular xyz) in
    the base frame; legs are usually solved position-only since 5 joints
    cannot meet an arbitrary 6D pose. Damping grows near singularities
    (lambda = base/sigma_min below the singularity threshold). Returns the
    best solution found even when not converged.
    """
    limb = model.limb(group)
    fast = model.fast
    idx = [model.joint_index[j] for j in limb.joints]
    tip_row = fast.index[limb.tip]
    mask = np.ones(6, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    q = seed.positions.copy()
    lo = model.position_lower[idx]
    hi = model.position_upper[idx]
    R_target = quat_to_matrix(target.orientation)

    best = None
    for it in range(max_iters + 1):
        table = fast.table(q)
        R_all, p_all = table
        dp = target.position - p_all[tip_row]
        dr = quat_to_rotvec(matrix_to_quat(R_target @ R_all[tip_row].T))
        pos_res = float(np.linalg.norm(dp)) if mask[:3].any() else 0.0
        rot_res = float(np.linalg.norm(dr)) if mask[3:].any() else 0.0
        if best is None or (pos_res + 0.1 * rot_res) < (best[1] + 0.1 * best[2]):
            best = (q[idx].copy(), pos_res, rot_res, it)
        if pos_res <= pos_tol and rot_res <= rot_tol:
            return IKResult(q[idx].copy(), True, pos_res, rot_res, it)
        if it == max_iters:
            break
        e = np.concatenate([dp, dr])[mask]
        J = fast.limb_jacobian(table, group)[mask]
        sigma_min = np.linalg.svd(J, compute_uv=False)[-1]
        lam = DLS_LAMBDA if sigma_min >= SINGULARITY_THRESHOLD else \
            DLS_LAMBDA / max(sigma_min, 1e-6)
        dq = J.T @ np.linalg.solve(J @ J.T + lam**2 * np.eye(J.shape[0]), e)
        step = np.max(np.abs(dq))
        if step > MAX_STEP:
            dq *= MAX_STEP / step
        q = q.copy()
        q[idx] = np.clip(q[idx] + dq, lo, hi)

    positions, pos_res, rot_res, it = best
    return IKResult(positions, False, pos_res, rot_res, max_iters)


def workspace_boundary_distance(model: RobotModel, group: str, point: np.ndarray,
                                samples: int = 2000, seed: int = 0) -> float:
    """Distance from a point to the limb workspace, estimated by random FK."""
    limb = model.limb(group)
    idx = [model.joint_index[j] for j in limb.joints]
    rng = np.random.default_rng(seed)
    lo = np.where(np.isfinite(model.position_lower[idx]), model.position_lower[idx], -np.pi)
    hi = np.where(np.isfinite(model.position_upper[idx]), model.position_upper[idx], np.pi)
    q = JointState.zeros(model)
    best = np.inf
    for _ in range(samples):
        q.positions[idx] = rng.uniform(lo, hi)
        tip = forward_kinematics(model, q, limb.tip)
        best = min(best, float(np.linalg.norm(tip.position - point)))
    return best


@dataclass
class WristCommand:
    """Incremental end-effector nudge with per-axis enable masks.

    The delta is expressed in the reference frame; masked-out axes are
    zeroed before the target pose is formed, so they see no commanded motion
    at all.
    """

    end_effector: str  # limb name
    frame: str = "base"  # "base" | "end_effector" | "custom"
    custom_frame: Pose6D | None = None
    translation_mask: np.ndarray = field(default_factory=lambda: np.ones(3, dtype=bool))
    rotation_mask: np.ndarray = field(default_factory=lambda: np.ones(3, dtype=bool))
    delta_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    delta_rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))  # rotvec
    speed_scale: float = 1.0

    def __post_init__(self):
        self.translation_mask = np.asarray(self.translation_mask, dtype=bool)
        self.rotation_mask = np.asarray(self.rotation_mask, dtype=bool)
        self.delta_translation = np.asarray(self.delta_translation, dtype=float)
        self.delta_rotation = np.asarray(self.delta_rotation, dtype=float)
        if self.frame not in ("base", "end_effector", "custom"):
            raise ValueError(f"unknown reference frame '{self.frame}'")
        if self.frame == "custom" and self.custom_frame is None:
            raise ValueError("custom frame requires custom_frame pose")

    def to_dict(self) -> dict:
        d = {
            "end_effector": self.end_effector,
            "frame": self.frame,
            "translation_mask": [bool(b) for b in self.translation_mask],
            "rotation_mask": [bool(b) for b in self.rotation_mask],
            "delta_translation": [float(v) for v in self.delta_translation],
            "delta_rotation": [float(v) for v in self.delta_rotation],
            "speed_scale": self.speed_scale,
        }
        if self.custom_frame is not None:
            d["custom_frame"] = self.custom_frame.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WristCommand":
        return cls(
            end_effector=d["end_effector"],
            frame=d.get("frame", "base"),
            custom_frame=Pose6D.from_dict(d["custom_frame"]) if "custom_frame" in d else None,
            translation_mask=np.array(d.get("translation_mask", [1, 1, 1]), dtype=bool),
            rotation_mask=np.array(d.get("rotation_mask", [1, 1, 1]), dtype=bool),
            delta_translation=np.array(d.get("delta_translation", [0, 0, 0]), dtype=float),
            delta_rotation=np.array(d.get("delta_rotation", [0, 0, 0]), dtype=float),
            speed_scale=d.get("speed_scale", 1.0),
        )


def wrist_target_pose(cmd: WristCommand, current_tip: Pose6D, dt: float) -> Pose6D:
    """Target pose after applying the masked, speed-clamped delta."""
    dp = np.where(cmd.translation_mask, cmd.delta_translation, 0.0)
    dr = np.where(cmd.rotation_mask, cmd.delta_rotation, 0.0)
    max_dp = WRIST_LINEAR_SPEED * cmd.speed_scale * dt
    max_dr = WRIST_ANGULAR_SPEED * cmd.speed_scale * dt
    n_dp = np.linalg.norm(dp)
    n_dr = np.linalg.norm(dr)
    if n_dp > max_dp > 0:
        dp = dp * (max_dp / n_dp)
    if n_dr > max_dr > 0:
        dr = dr * (max_dr / n_dr)

    if cmd.frame == "base":
        frame_q = np.array([0.0, 0.0, 0.0, 1.0])
    elif cmd.frame == "end_effector":
        frame_q = current_tip.orientation
    else:
        frame_q = cmd.custom_frame.orientation
    dp_base = quat_rotate(frame_q, dp)
    rot_base = quat_from_rotvec(quat_rotate(frame_q, dr))
    return Pose6D(current_tip.position + dp_base,
                  quat_multiply(rot_base, current_tip.orientation))


def wrist_step(cmd: WristCommand, current: JointState, model: RobotModel,
               dt: float):
    """One wrist-interface increment: masked delta -> IK -> short trajectory.

    Returns (Trajectory over the limb's joints, IKResult). IK is run to a
    tight tolerance so that off-mask leakage stays below the interface
    guarantee (1e-5 m / 1e-4 rad).
    """
    from .keyframes import Segment, Trajectory, min_segment_duration

    limb = model.limb(cmd.end_effector)
    idx = [model.joint_index[j] for j in limb.joints]
    tip = forward_kinematics(model, current, limb.tip)
    target = wrist_target_pose(cmd, tip, dt)
    res = solve_ik(model, cmd.end_effector, target, current,
                   pos_tol=1e-8, rot_tol=1e-7, max_iters=100)
    if not res.converged and (res.pos_residual > 1e-6 or res.rot_residual > 1e-5):
        raise IKError(
            f"wrist step IK failed for '{cmd.end_effector}' "
            f"(residual {res.pos_residual:.2e} m / {res.rot_residual:.2e} rad)",
            group=cmd.end_effector, residual=res.pos_residual)
    q1 = current.positions.copy()
    q1[idx] = res.positions
    vel = model.velocity_limits.copy()
    acc = model.acceleration_limits.copy()
    T = max(min_segment_duration(q1 - current.positions, vel, acc), dt)
    seg = Segment.rest_to_rest(0.0, T, current.positions, q1, vel, acc)
    mask = np.zeros(model.n_joints, dtype=bool)
    mask[idx] = True
    return Trajectory([seg], joint_mask=mask), res
