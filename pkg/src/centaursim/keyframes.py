"""Keyframe motions: quintic joint-space trajectories with limit scaling.

Each segment is a rest-to-rest quintic per joint, time-synchronized so all
joints of a keyframe arrive together; velocity and acceleration are zero at
every keyframe boundary, which makes the concatenation C2-continuous and
jerk-bounded. Cartesian keyframe targets are resolved to joint space by IK
once, when the queue is interpolated.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from .model import JointState, RobotModel
from .transforms import Pose6D

DEFAULT_CONTROL_PERIOD = 0.01  # s
PREEMPT_BLEND_TIME = 0.2  # s

# minimal-duration factors for the rest-to-rest quintic profile
_PEAK_VEL_FACTOR = 15.0 / 8.0
_PEAK_ACC_FACTOR = 10.0 / np.sqrt(3.0)


class KeyframeError(ValueError):
    pass


@dataclass
class JointTarget:
    """Joint-space target for a group's chain joints, in chain order."""

    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)


@dataclass
class CartesianTarget:
    """End-effector pose target for a group; mask selects controlled axes
    (linear xyz then angular xyz). Legs default to position-only."""

    pose: Pose6D
    mask: np.ndarray | None = None


@dataclass
class Keyframe:
    """Per-group targets plus per-keyframe velocity/acceleration limit scales."""

    targets: dict[str, JointTarget | CartesianTarget]
    vel_scale: float = 1.0
    acc_scale: float = 1.0
    hold: float = 0.0
    name: str = ""

    def __post_init__(self):
        if not self.targets:
            raise KeyframeError("keyframe needs at least one group target")
        if not (0.0 < self.vel_scale <= 1.0) or not (0.0 < self.acc_scale <= 1.0):
            raise KeyframeError("limit scales must be in (0, 1]")
        if self.hold < 0.0:
            raise KeyframeError("hold duration must be non-negative")

    def to_dict(self) -> dict:
        targets = {}
        for group, t in self.targets.items():
            if isinstance(t, JointTarget):
                targets[group] = {"joint_positions": [float(v) for v in t.positions]}
            else:
                entry = {"pose": t.pose.to_dict()}
                if t.mask is not None:
                    entry["mask"] = [bool(b) for b in t.mask]
                targets[group] = entry
        return {"targets": targets, "vel_scale": self.vel_scale,
                "acc_scale": self.acc_scale, "hold": self.hold, "name": self.name}

    @classmethod
    def from_dict(cls, d: dict) -> "Keyframe":
        targets: dict[str, JointTarget | CartesianTarget] = {}
        for group, t in d["targets"].items():
            if "joint_positions" in t:
                targets[group] = JointTarget(np.array(t["joint_positions"], dtype=float))
            elif "pose" in t:
                mask = np.array(t["mask"], dtype=bool) if "mask" in t else None
                targets[group] = CartesianTarget(Pose6D.from_dict(t["pose"]), mask)
            else:
                raise KeyframeError(f"group '{group}': no target kind given")
        return cls(targets, d.get("vel_scale", 1.0), d.get("acc_scale", 1.0),
                   d.get("hold", 0.0), d.get("name", ""))


def _quintic_matrix(T: float) -> np.ndarray:
    return np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, T, T**2, T**3, T**4, T**5],
        [0, 1, 2 * T, 3 * T**2, 4 * T**3, 5 * T**4],
        [0, 0, 2, 6 * T, 12 * T**2, 20 * T**3],
    ])


@dataclass
class Segment:
    """Quintic polynomial segment for all joints over [t0, t0+duration]."""

    t0: float
    duration: float
    coeffs: np.ndarray  # (n_joints, 6), constant term first
    vel_limits: np.ndarray  # effective (scaled) limits this segment must obey
    acc_limits: np.ndarray

    @classmethod
    def rest_to_rest(cls, t0, T, q0, q1, vel_limits, acc_limits) -> "Segment":
        return cls.from_boundary(t0, T, q0, np.zeros_like(q0), np.zeros_like(q0),
                                 q1, np.zeros_like(q1), np.zeros_like(q1),
                                 vel_limits, acc_limits)

    @classmethod
    def from_boundary(cls, t0, T, q0, v0, a0, q1, v1, a1, vel_limits, acc_limits) -> "Segment":
        n = len(q0)
        if T <= 0.0:
            coeffs = np.zeros((n, 6))
            coeffs[:, 0] = q1
            return cls(t0, 0.0, coeffs, vel_limits, acc_limits)
        rhs = np.stack([q0, v0, a0, q1, v1, a1], axis=0)
        coeffs = np.linalg.solve(_quintic_matrix(T), rhs).T
        return cls(t0, T, coeffs, vel_limits, acc_limits)

    def sample(self, t: float):
        """Positions, velocities, accelerations at absolute time t (clamped)."""
        tau = np.clip(t - self.t0, 0.0, self.duration)
        powers = tau ** np.arange(6)
        q = self.coeffs @ powers
        dcoef = self.coeffs[:, 1:] * np.arange(1, 6)
        v = dcoef @ powers[:5]
        ddcoef = dcoef[:, 1:] * np.arange(1, 5)
        a = ddcoef @ powers[:4]
        return q, v, a

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration

    @property
    def end_positions(self) -> np.ndarray:
        return self.sample(self.t_end)[0]


class Trajectory:
    """Piecewise-quintic joint trajectory; exact closed-form sampling anywhere."""

    def __init__(self, segments: list[Segment], period: float = DEFAULT_CONTROL_PERIOD,
                 joint_mask: np.ndarray | None = None):
        if not segments:
            raise KeyframeError("trajectory needs at least one segment")
        self.segments = segments
        self.period = period
        self.joint_mask = joint_mask  # joints this trajectory is allowed to move
        self._starts = [s.t0 for s in segments]

    @property
    def duration(self) -> float:
        return self.segments[-1].t_end

    def sample(self, t: float):
        if t <= self.segments[0].t0:
            return self.segments[0].sample(self.segments[0].t0)
        i = bisect.bisect_right(self._starts, t) - 1
        seg = self.segments[i]
        if t > seg.t_end and i + 1 < len(self.segments):
            seg = self.segments[i + 1]
        return seg.sample(t)

    def sample_times(self) -> np.ndarray:
        """Control-period grid plus the exact end of every segment."""
        times = [self.segments[0].t0]
        for seg in self.segments:
            if seg.duration > 0.0:
                k = int(np.ceil(seg.duration / self.period)) - 1
                times.extend(seg.t0 + self.period * np.arange(1, k + 1))
            if seg.t_end > times[-1] + 1e-12:
                times.append(seg.t_end)
        return np.array(times)

    def sampled(self):
        """(times, positions, velocities, accelerations) arrays."""
        times = self.sample_times()
        qs, vs, accs = [], [], []
        for t in times:
            q, v, a = self.sample(t)
            qs.append(q)
            vs.append(v)
            accs.append(a)
        return times, np.array(qs), np.array(vs), np.array(accs)

    @property
    def end_positions(self) -> np.ndarray:
        return self.segments[-1].end_positions


def min_segment_duration(delta: np.ndarray, vel_limits: np.ndarray,
                         acc_limits: np.ndarray) -> float:
    """Shortest rest-to-rest quintic duration obeying |v| and |a| limits."""
    d = np.abs(np.asarray(delta, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_vel = _PEAK_VEL_FACTOR * d / vel_limits
        t_acc = np.sqrt(_PEAK_ACC_FACTOR * d / acc_limits)
    t = np.maximum(t_vel, t_acc)
    return float(np.max(t)) if t.size else 0.0


def group_joint_indices(model: RobotModel, group: str) -> list[int]:
    limb = model.limb(group)
    return [model.joint_index[j] for j in limb.joints]


def interpolate(queue: list[Keyframe], start: JointState, model: RobotModel,
                period: float = DEFAULT_CONTROL_PERIOD,
                t0: float = 0.0) -> Trajectory:
    """Resolve a keyframe queue to a time-synchronized quintic trajectory.

    Cartesian targets are converted to joint space by IK here, seeded with
    the previous keyframe's solution. Raises IKError when a pose target
    cannot be reached.
    """
    from .ik import solve_ik, IKError  # local import to avoid a cycle

    if not queue:
        raise KeyframeError("empty keyframe queue")
    current = start.positions.copy()
    segments: list[Segment] = []
    touched = np.zeros(model.n_joints, dtype=bool)
    t = t0
    for k, kf in enumerate(queue):
        target = current.copy()
        for group, tgt in kf.targets.items():
            idx = group_joint_indices(model, group)
            touched[idx] = True
            if isinstance(tgt, JointTarget):
                if len(tgt.positions) != len(idx):
                    raise KeyframeError(
                        f"keyframe {k}: group '{group}' expects {len(idx)} joints, "
                        f"got {len(tgt.positions)}")
                target[idx] = tgt.positions
            else:
                mask = tgt.mask
                if mask is None:
                    kind = model.limb(group).kind
                    mask = np.ones(6, bool) if kind == "arm" else \
                        np.array([1, 1, 1, 0, 0, 0], bool)
                res = solve_ik(model, group, tgt.pose, JointState(target), mask=mask)
                if not res.converged:
                    raise IKError(
                        f"keyframe {k}: IK for group '{group}' did not converge "
                        f"(residual {res.pos_residual:.2e} m / {res.rot_residual:.2e} rad)",
                        group=group, residual=res.pos_residual)
                target[idx] = res.positions
        vel = model.velocity_limits * kf.vel_scale
        acc = model.acceleration_limits * kf.acc_scale
        T = min_segment_duration(target - current, vel, acc)
        segments.append(Segment.rest_to_rest(t, T, current, target, vel, acc))
        t += T
        if kf.hold > 0.0:
            segments.append(Segment.rest_to_rest(t, kf.hold, target, target, vel, acc))
            t += kf.hold
        current = target
    return Trajectory(segments, period, joint_mask=touched)


def limit_violation(traj: Trajectory, resolution: float = 1e-3) -> float:
    """Worst relative velocity/acceleration limit violation over a dense resample.

    <= 0 means fully compliant.
    """
    worst = -np.inf
    for seg in traj.segments:
        if seg.duration <= 0.0:
            continue
        ts = seg.t0 + np.arange(0.0, seg.duration + resolution / 2, resolution)
        for t in ts:
            _, v, a = seg.sample(t)
            worst = max(worst,
                        float(np.max(np.abs(v) / seg.vel_limits - 1.0)),
                        float(np.max(np.abs(a) / seg.acc_limits - 1.0)))
    return worst


@dataclass
class _Active:
    trajectory: Trajectory
    start_time: float
    command_id: int | None = None
    done: bool = False


class MotionExecutor:
    """Owns trajectory playback; one instance per robot.

    Multiple trajectories may play concurrently when their joint masks are
    disjoint (e.g. an arm nudge while the legs hold). Submitting a trajectory
    that overlaps active ones preempts those with a velocity-continuous blend.
    """

    def __init__(self, model: RobotModel, start: JointState,
                 period: float = DEFAULT_CONTROL_PERIOD):
        self.model = model
        self.period = period
        self.time = 0.0
        self.targets = start.positions.copy()
        self._active: list[_Active] = []

    @property
    def idle(self) -> bool:
        return not self._active

    def active_command_ids(self) -> list[int]:
        return [a.command_id for a in self._active if a.command_id is not None]

    def submit_queue(self, queue: list[Keyframe], command_id: int | None = None,
                     blend: float = PREEMPT_BLEND_TIME) -> list[int]:
        """Interpolate and start a queue; returns ids of preempted commands."""
        probe = interpolate(queue, JointState(self.targets), self.model, self.period)
        return self._submit_mask(probe.joint_mask, command_id, blend,
                                 lambda state, t0: interpolate(
                                     queue, state, self.model, self.period, t0=t0))

    def submit_trajectory(self, traj: Trajectory, command_id: int | None = None,
                          blend: float = PREEMPT_BLEND_TIME) -> list[int]:
        if traj.joint_mask is None:
            raise KeyframeError("trajectory needs a joint mask for execution")
        offset = self.time - traj.segments[0].t0
        for seg in traj.segments:
            seg.t0 += offset
        traj._starts = [s.t0 for s in traj.segments]
        return self._submit_mask(traj.joint_mask, command_id, 0.0,
                                 lambda state, t0: traj)

    def _submit_mask(self, mask, command_id, blend, build) -> list[int]:
        preempted = []
        overlapping = [a for a in self._active
                       if np.any(a.trajectory.joint_mask & mask)]
        start_positions = self.targets.copy()
        t_start = self.time
        if overlapping and blend > 0.0:
            # ramp the overlapped joints to rest, then play the new queue
            q, v, a = self._sample_all()
            vel = self.model.velocity_limits
            acc = self.model.acceleration_limits
            stop = q + v * blend * 0.5
            lo = np.where(np.isfinite(self.model.position_lower),
                          self.model.position_lower, stop)
            hi = np.where(np.isfinite(self.model.position_upper),
                          self.model.position_upper, stop)
            stop = np.clip(stop, lo, hi)
            seg = Segment.from_boundary(self.time, blend, q, v, a,
                                        stop, np.zeros_like(q), np.zeros_like(q),
                                        vel, acc)
            start_positions = stop
            t_start = self.time + blend
            blend_traj = Trajectory([seg], self.period, joint_mask=mask.copy())
            for o in overlapping:
                self._active.remove(o)
                if o.command_id is not None:
                    preempted.append(o.command_id)
            self._active.append(_Active(blend_traj, self.time, None))
        elif overlapping:
            for o in overlapping:
                self._active.remove(o)
                if o.command_id is not None:
                    preempted.append(o.command_id)
        traj = build(JointState(start_positions), t_start)
        self._active.append(_Active(traj, t_start, command_id))
        return preempted

    def _sample_all(self):
        q = self.targets.copy()
        v = np.zeros_like(q)
        a = np.zeros_like(q)
        for act in self._active:
            if self.time < act.trajectory.segments[0].t0:
                continue
            qi, vi, ai = act.trajectory.sample(self.time)
            m = act.trajectory.joint_mask
            q[m] = qi[m]
            v[m] = vi[m]
            a[m] = ai[m]
        return q, v, a

    def tick(self, dt: float) -> tuple[np.ndarray, list[int]]:
        """Advance playback; returns (joint targets, finished command ids)."""
        self.time += dt
        finished = []
        for act in list(self._active):
            traj = act.trajectory
            if self.time < traj.segments[0].t0:
                continue  # scheduled behind a blend, not started yet
            q, _, _ = traj.sample(self.time)
            m = traj.joint_mask
            self.targets[m] = q[m]
            if self.time >= traj.segments[-1].t_end - 1e-12:
                self._active.remove(act)
                if act.command_id is not None:
                    finished.append(act.command_id)
        return self.targets.copy(), finished

    def estop(self) -> list[int]:
        """Drop all motion immediately; targets freeze at their last value."""
        dropped = [a.command_id for a in self._active if a.command_id is not None]
        self._active.clear()
        return dropped


# -- keyframe file I/O --------------------------------------------------------


def queue_to_dict(queue: list[Keyframe]) -> dict:
    return {"keyframes": [kf.to_dict() for kf in queue]}


def queue_from_dict(doc: dict) -> list[Keyframe]:
    return [Keyframe.from_dict(d) for d in doc["keyframes"]]


def save_queue(queue: list[Keyframe], path: str):
    """Write a keyframe queue file (same schema as the wire messages)."""
    import json

    with open(path, "w") as f:
        json.dump(queue_to_dict(queue), f, indent=1)


def load_queue(path: str) -> list[Keyframe]:
    import json

    with open(path) as f:
        return queue_from_dict(json.load(f))
