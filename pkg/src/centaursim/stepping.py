"""Semi-autonomous stepping: operator-triggered foot motions with autonomous
balancing and contact-terminated lowering.

Each command runs a phase machine (IDLE -> SHIFT_BALANCE -> LIFT -> EXTEND ->
LOWER -> RESTORE -> IDLE). Balance shifts move the base by driving all
stance legs through IK while the feet stay anchored in the world; lowering
descends at constant speed and stops within one control tick of ground
contact. Completed motions land in a history ring for the operator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .contact import convex_hull_2d, signed_margin
from .ik import solve_ik
from .keyframes import Keyframe, JointTarget, MotionExecutor
from .model import JointState, RobotModel
from .transforms import Pose6D, quat_rotate
from .world import FOOT_KEYS, FOOT_LIMB, World, WorldSnapshot

logger = logging.getLogger(__name__)

POSITION_MASK = np.array([1, 1, 1, 0, 0, 0], dtype=bool)


class StepPhase(Enum):
    IDLE = "IDLE"
    SHIFT_BALANCE = "SHIFT_BALANCE"
    LIFT = "LIFT"
    EXTEND = "EXTEND"
    LOWER = "LOWER"
    RESTORE = "RESTORE"


LEGAL_TRANSITIONS = {
    StepPhase.IDLE: {StepPhase.SHIFT_BALANCE},
    StepPhase.SHIFT_BALANCE: {StepPhase.LIFT, StepPhase.RESTORE},
    StepPhase.LIFT: {StepPhase.EXTEND},
    StepPhase.EXTEND: {StepPhase.LOWER},
    StepPhase.LOWER: {StepPhase.RESTORE},
    StepPhase.RESTORE: {StepPhase.IDLE},
}


@dataclass
class StepConfig:
    lift_height: float = 0.15  # clears 0.10 m blocks
    margin_min: float = 0.04
    lower_speed: float = 0.05  # m/s
    lower_depth_limit: float = 0.25  # m below start height
    roll_bound: float = np.radians(10.0)
    max_shift: float = 0.20  # m base translation per balance shift
    max_step: float = 0.25  # m extension bound
    drive_speed: float = 0.05  # m/s for drive_foot / shift_base
    vel_scale: float = 0.35
    acc_scale: float = 0.5


@dataclass
class StepCommand:
    kind: str  # "step_foot" | "drive_foot" | "shift_base"
    foot: str | None = None
    length: float = 0.10
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("step_foot", "drive_foot", "shift_base"):
            raise ValueError(f"unknown step command kind '{self.kind}'")
        if self.kind in ("step_foot", "drive_foot"):
            if self.foot not in FOOT_KEYS:
                raise ValueError(f"invalid foot '{self.foot}'")

    def config(self, base: StepConfig) -> StepConfig:
        cfg = StepConfig(**{**base.__dict__, **self.overrides})
        if not (0.0 < self.length <= cfg.max_step):
            raise ValueError(
                f"extension length {self.length} outside (0, {cfg.max_step}]")
        return cfg

    def to_dict(self) -> dict:
        return {"kind": self.kind, "foot": self.foot, "length": self.length,
                "overrides": self.overrides}

    @classmethod
    def from_dict(cls, d: dict) -> "StepCommand":
        return cls(d["kind"], d.get("foot"), d.get("length", 0.10),
                   d.get("overrides", {}))


@dataclass
class MotionRecord:
    kind: str
    foot: str | None
    length: float
    started: float
    finished: float
    outcome: str  # "done" | "aborted_no_contact" | "frozen_margin" | "rejected"

    def to_dict(self) -> dict:
        return self.__dict__.copy()


class CommandRejected(RuntimeError):
    def __init__(self, message, best_margin=None):
        super().__init__(message)
        self.best_margin = best_margin


@dataclass
class StepStatus:
    phase: str
    foot: str | None
    progress: float
    history: list[dict]

    def to_dict(self) -> dict:
        return {"phase": self.phase, "foot": self.foot,
                "progress": self.progress, "history": self.history}


class SteppingController:
    """One instance per robot; commands are executed strictly one at a time."""

    def __init__(self, model: RobotModel, world: World,
                 config: StepConfig | None = None):
        self.model = model
        self.world = world
        self.config = config or StepConfig()
        self.phase = StepPhase.IDLE
        self.command: StepCommand | None = None
        self.cfg: StepConfig | None = None
        self.history: list[MotionRecord] = []
        self._executor: MotionExecutor | None = None
        self._foot_targets: dict = {}
        self._start_time = 0.0
        self._progress_phases = 0
        self._phases_done = 0
        self.margin_trace: list[float] = []
        self.last_error: str = ""

    # -- public API -------------------------------------------------------------

    @property
    def active(self) -> bool:
        return self.phase is not StepPhase.IDLE

    def status(self) -> StepStatus:
        progress = 0.0
        if self.active and self._progress_phases:
            progress = min(self._phases_done / self._progress_phases, 1.0)
        return StepStatus(self.phase.value,
                          self.command.foot if self.command else None,
                          progress, [r.to_dict() for r in self.history[-20:]])

    def start(self, cmd: StepCommand, snap: WorldSnapshot):
        """Validate and begin a command. Raises CommandRejected on failure."""
        if self.active:
            raise CommandRejected("a stepping command is already active")
        cfg = cmd.config(self.config)
        if not all(snap.feet[k].contact for k in FOOT_KEYS):
            raise CommandRejected("all four feet must be in contact")
        self.command = cmd
        self.cfg = cfg
        self._start_time = snap.time
        self.margin_trace = []
        self.world.set_mode("step")
        self._executor = MotionExecutor(self.model, snap.q, self.world.period)

        if cmd.kind == "step_foot":
            queue = self.plan_balance_shift(snap, cmd.foot, cfg)
            self._progress_phases = 5
            self._phases_done = 0
            self._transition(StepPhase.SHIFT_BALANCE)
            if queue:
                self._executor.submit_queue(queue, blend=0.0)
        elif cmd.kind == "drive_foot":
            self.world.release_anchor(cmd.foot)
            start = snap.feet[cmd.foot]
            self._foot_targets = {
                "travelled": 0.0,
                "start_force": max(start.force, 1.0),
                "xy": start.position[:2].copy(),
                "penetration": max(start.force, 1.0) / 50_000.0,
            }
            self._progress_phases = 1
            self._phases_done = 0
            self._transition(StepPhase.SHIFT_BALANCE)  # nominal entry
            self._transition(StepPhase.LIFT)
            self._transition(StepPhase.EXTEND)  # drive happens in EXTEND
        else:  # shift_base
            queue = self._plan_base_translation(snap, np.array([cmd.length, 0.0]), cfg)
            self._progress_phases = 1
            self._phases_done = 0
            self._transition(StepPhase.SHIFT_BALANCE)
            if queue:
                self._executor.submit_queue(queue, blend=0.0)

    def tick(self, snap: WorldSnapshot, dt: float) -> np.ndarray | None:
        """Advance the phase machine; returns joint targets while active."""
        if not self.active:
            return None
        if snap.margin is not None:
            self.margin_trace.append(snap.margin)
            if snap.margin < 0.0:
                return self._freeze(snap, "stability margin violated")

        cmd, cfg = self.command, self.cfg
        if cmd.kind == "step_foot":
            return self._tick_step_foot(snap, dt)
        if cmd.kind == "drive_foot":
            return self._tick_drive_foot(snap, dt)
        return self._tick_shift_base(snap, dt)

    # -- planning ----------------------------------------------------------------

    def plan_balance_shift(self, snap: WorldSnapshot, stepping_foot: str,
                           cfg: StepConfig | None = None) -> list[Keyframe]:
        """Keyframes moving the CoM into the remaining support tripod.

        Empty when the margin requirement already holds. Raises
        CommandRejected (with the best achievable margin) when no shift
        within bounds establishes it.
        """
        cfg = cfg or self.config
        stance = [k for k in FOOT_KEYS if k != stepping_foot]
        tripod = np.array([snap.feet[k].position[:2] for k in stance])
        hull = convex_hull_2d(tripod)
        com_xy = snap.com_world[:2]
        margin = signed_margin(com_xy, hull)
        if margin >= cfg.margin_min:
            return []
        # walk toward the incenter until the margin requirement holds
        incenter = self._incenter(hull)
        inradius = signed_margin(incenter, hull)
        if inradius < cfg.margin_min:
            raise CommandRejected(
                f"support tripod too small: best achievable margin {inradius:.3f} m",
                best_margin=inradius)
        lo, hi = 0.0, 1.0
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if signed_margin(com_xy + mid * (incenter - com_xy), hull) >= \
                    cfg.margin_min + 0.005:
                hi = mid
            else:
                lo = mid
        delta = hi * (incenter - com_xy)
        if np.linalg.norm(delta) > cfg.max_shift:
            clamped = cfg.max_shift * (incenter - com_xy) / \
                np.linalg.norm(incenter - com_xy)
            best = signed_margin(com_xy + clamped, hull)
            if best < cfg.margin_min:
                raise CommandRejected(
                    f"required shift {np.linalg.norm(delta):.3f} m exceeds bound "
                    f"{cfg.max_shift} m (margin at bound {best:.3f} m)",
                    best_margin=best)
            delta = clamped
        return self._plan_base_translation(snap, delta, cfg)

    def _plan_base_translation(self, snap: WorldSnapshot, delta_xy: np.ndarray,
                               cfg: StepConfig) -> list[Keyframe]:
        """One keyframe driving all stance legs so the base moves by delta."""
        if np.linalg.norm(delta_xy) < 1e-6:
            return []
        inv = snap.base_pose.inverse()
        delta_b = quat_rotate(inv.orientation, np.array([delta_xy[0], delta_xy[1], 0.0]))
        q_work = snap.q.copy()
        targets = {}
        for k in FOOT_KEYS:
            foot_b = inv.transform_point(snap.feet[k].position)
            goal = foot_b - delta_b
            res = solve_ik(self.model, FOOT_LIMB[k], Pose6D(goal), q_work,
                           mask=POSITION_MASK)
            if not res.converged:
                raise CommandRejected(
                    f"balance shift infeasible for {k} (residual {res.pos_residual:.4f})")
            targets[FOOT_LIMB[k]] = JointTarget(res.positions)
            idx = [self.model.joint_index[j] for j in self.model.limb(FOOT_LIMB[k]).joints]
            q_work.positions[idx] = res.positions
        return [Keyframe(targets, vel_scale=cfg.vel_scale, acc_scale=cfg.acc_scale)]

    @staticmethod
    def _incenter(hull: np.ndarray) -> np.ndarray:
        """Incenter of a triangle hull; centroid fallback for larger hulls."""
        if len(hull) != 3:
            return hull.mean(axis=0)
        a = np.linalg.norm(hull[2] - hull[1])
        b = np.linalg.norm(hull[2] - hull[0])
        c = np.linalg.norm(hull[1] - hull[0])
        return (a * hull[0] + b * hull[1] + c * hull[2]) / (a + b + c)

    # -- per-kind phase logic ------------------------------------------------------

    def _tick_step_foot(self, snap: WorldSnapshot, dt: float):
        cmd, cfg = self.command, self.cfg
        foot = cmd.foot
        limb = FOOT_LIMB[foot]

        if self.phase in (StepPhase.SHIFT_BALANCE, StepPhase.LIFT,
                          StepPhase.EXTEND, StepPhase.RESTORE):
            targets, _ = self._executor.tick(dt)
            if self._executor.idle:
                if self.phase is StepPhase.SHIFT_BALANCE:
                    self.world.release_anchor(foot)
                    self._submit_foot_move(snap, foot, dz=cfg.lift_height)
                    self._transition(StepPhase.LIFT)
                elif self.phase is StepPhase.LIFT:
                    heading = snap.base_pose.yaw()
                    self._submit_foot_move(
                        snap, foot,
                        dxy=np.array([np.cos(heading), np.sin(heading)]) * cmd.length)
                    self._transition(StepPhase.EXTEND)
                elif self.phase is StepPhase.EXTEND:
                    start = self._current_foot_world(snap, foot)
                    self._foot_targets = {"start_z": start[2], "pos": start.copy(),
                                          "outcome": "done"}
                    self._transition(StepPhase.LOWER)
                elif self.phase is StepPhase.RESTORE:
                    self._finish(snap, self._foot_targets.get("outcome", "done"))
            return targets

        if self.phase is StepPhase.LOWER:
            if snap.feet[foot].contact:
                # retract the target to the measured pose: the servo keeps
                # descending toward a frozen target otherwise, and the
                # overshoot bound (lower speed x tick) would not hold
                self._track_foot_world(snap, foot, snap.feet[foot].position)
                self.world.capture_anchor(foot)
                self._transition(StepPhase.RESTORE)
                return self._executor.targets.copy()
            tgt = self._foot_targets
            tgt["pos"][2] -= cfg.lower_speed * dt
            if tgt["start_z"] - tgt["pos"][2] > cfg.lower_depth_limit:
                # no ground found: retract to lift height and give up
                tgt["outcome"] = "aborted_no_contact"
                retract = tgt["pos"].copy()
                retract[2] = tgt["start_z"]
                self._submit_foot_world(snap, foot, retract)
                self._transition(StepPhase.RESTORE)
                return self._executor.targets.copy()
            return self._track_foot_world(snap, foot, tgt["pos"])
        return None

    def _tick_drive_foot(self, snap: WorldSnapshot, dt: float):
        cmd, cfg = self.command, self.cfg
        foot = cmd.foot
        tgt = self._foot_targets
        if tgt["travelled"] >= cmd.length - 1e-9:
            self.world.capture_anchor(foot)
            self._transition(StepPhase.LOWER)
            self._transition(StepPhase.RESTORE)
            self._finish(snap, "done")
            return self._executor.targets.copy()
        heading = snap.base_pose.yaw()
        adv = min(cfg.drive_speed * dt, cmd.length - tgt["travelled"])
        tgt["travelled"] += adv
        tgt["xy"] = tgt["xy"] + np.array([np.cos(heading), np.sin(heading)]) * adv
        ground = self.world.scenario.terrain.height_one(*tgt["xy"])
        z = ground + self.model.wheel_radius - tgt["penetration"]
        targets = self._track_foot_world(
            snap, foot, np.array([tgt["xy"][0], tgt["xy"][1], z]))
        # roll the wheel consistently with the commanded advance
        widx = self.model.joint_index[self.model.limb(FOOT_LIMB[foot]).wheel_joint]
        self._executor.targets[widx] += adv / self.model.wheel_radius
        return targets

    def _tick_shift_base(self, snap: WorldSnapshot, dt: float):
        targets, _ = self._executor.tick(dt)
        if self._executor.idle:
            self._transition(StepPhase.LIFT)
            self._transition(StepPhase.EXTEND)
            self._transition(StepPhase.LOWER)
            self._transition(StepPhase.RESTORE)
            self._finish(snap, "done")
        return targets

    # -- helpers -------------------------------------------------------------------

    def _current_foot_world(self, snap: WorldSnapshot, foot: str) -> np.ndarray:
        fast = self.model.fast
        table = fast.table(self._executor.targets)
        p_b = fast.link_position(table, f"{foot}_wheel")
        return snap.base_pose.transform_point(p_b)

    def _submit_foot_move(self, snap: WorldSnapshot, foot: str,
                          dz: float = 0.0, dxy: np.ndarray | None = None):
        goal = self._current_foot_world(snap, foot)
        goal = goal + np.array([0.0, 0.0, dz])
        if dxy is not None:
            goal[:2] += dxy
        self._submit_foot_world(snap, foot, goal)

    def _submit_foot_world(self, snap: WorldSnapshot, foot: str, goal_w: np.ndarray):
        limb = FOOT_LIMB[foot]
        goal_b = snap.base_pose.inverse().transform_point(goal_w)
        res = solve_ik(self.model, limb, Pose6D(goal_b),
                       JointState(self._executor.targets), mask=POSITION_MASK)
        if not res.converged:
            raise CommandRejected(
                f"foot move infeasible for {foot} (residual {res.pos_residual:.4f})")
        self._executor.submit_queue(
            [Keyframe({limb: JointTarget(res.positions)},
                      vel_scale=self.cfg.vel_scale, acc_scale=self.cfg.acc_scale)],
            blend=0.0)

    def _track_foot_world(self, snap: WorldSnapshot, foot: str,
                          goal_w: np.ndarray) -> np.ndarray:
        """One incremental IK step toward a slowly moving world target."""
        limb = FOOT_LIMB[foot]
        goal_b = snap.base_pose.inverse().transform_point(goal_w)
        res = solve_ik(self.model, limb, Pose6D(goal_b),
                       JointState(self._executor.targets), mask=POSITION_MASK,
                       max_iters=3, pos_tol=1e-6)
        idx = [self.model.joint_index[j] for j in self.model.limb(limb).joints]
        self._executor.targets[idx] = res.positions
        return self._executor.targets.copy()

    def _transition(self, phase: StepPhase):
        if phase not in LEGAL_TRANSITIONS[self.phase]:
            raise RuntimeError(f"illegal phase transition {self.phase} -> {phase}")
        self.phase = phase
        self._phases_done += 1

    def _freeze(self, snap: WorldSnapshot, reason: str,
                outcome: str = "frozen_margin"):
        logger.error("stepping frozen: %s", reason)
        self.last_error = reason
        self._record(snap, outcome)
        self.phase = StepPhase.IDLE
        self.command = None
        return self._executor.targets.copy()

    def _finish(self, snap: WorldSnapshot, outcome: str):
        self._record(snap, outcome)
        self.phase = StepPhase.IDLE
        self.command = None

    def _record(self, snap: WorldSnapshot, outcome: str):
        self.history.append(MotionRecord(
            self.command.kind, self.command.foot, self.command.length,
            self._start_time, snap.time, outcome))
