"""Kinematic robot description: tree of links, joints, limb groupings.

The model is immutable after load; every operation here is a pure function of
(model, joint state). Twist/Jacobian convention: linear part first.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .transforms import Pose6D, quat_from_axis_angle, quat_multiply, quat_rotate, quat_to_matrix

logger = logging.getLogger(__name__)

GRAVITY = 9.81  # m/s^2

LIMB_LEG_JOINTS = 5
LIMB_ARM_JOINTS = 7


class ModelError(ValueError):
    """Raised when a model file violates the schema or its invariants."""


@dataclass(frozen=True)
class Joint:
    name: str
    type: str  # "revolute" | "continuous"
    axis: np.ndarray
    limits: tuple[float, float] | None  # None for continuous joints
    velocity_limit: float
    acceleration_limit: float


@dataclass(frozen=True)
class Link:
    name: str
    parent: str | None
    origin: Pose6D  # fixed transform parent -> joint frame of this link
    mass: float
    com: np.ndarray  # CoM offset in link frame
    joint: Joint | None  # joint moving this link relative to parent (None = fixed)


@dataclass(frozen=True)
class Limb:
    name: str
    kind: str  # "leg" | "arm" | "torso"
    joints: tuple[str, ...]  # actuated chain joints (5 for legs, 7 for arms)
    tip: str  # end-effector link name
    steer_joint: str | None = None  # legs only
    wheel_joint: str | None = None  # legs only


class RobotModel:
    """Tree-structured kinematic model. Immutable after construction."""

    def __init__(self, name: str, links: list[Link], limbs: dict[str, Limb],
                 wheel_radius: float):
        self.name = name
        self.links = {l.name: l for l in links}
        self.limbs = limbs
        self.wheel_radius = wheel_radius
        self._validate_tree()
        # topological order: parents before children
        self.link_order = self._topological_order()
        self.joint_names: list[str] = [
            self.links[n].joint.name for n in self.link_order if self.links[n].joint
        ]
        self.joint_index = {n: i for i, n in enumerate(self.joint_names)}
        self._joint_of_link = {
            n: self.links[n].joint.name for n in self.link_order if self.links[n].joint
        }
        self._link_of_joint = {v: k for k, v in self._joint_of_link.items()}
        self.n_joints = len(self.joint_names)
        self.total_mass = sum(l.mass for l in links)
        self._validate_limbs()
        lims = np.array([
            self._joint_by_name(j).limits or (-np.inf, np.inf) for j in self.joint_names
        ]).reshape(-1, 2)
        self.position_lower = lims[:, 0]
        self.position_upper = lims[:, 1]
        self.velocity_limits = np.array(
            [self._joint_by_name(j).velocity_limit for j in self.joint_names])
        self.acceleration_limits = np.array(
            [self._joint_by_name(j).acceleration_limit for j in self.joint_names])

    # -- validation ---------------------------------------------------------

    def _validate_tree(self):
        roots = [l for l in self.links.values() if l.parent is None]
        if len(roots) != 1:
            raise ModelError(f"model must have exactly one root link, found {len(roots)}")
        self.root = roots[0].name
        for l in self.links.values():
            if l.parent is not None and l.parent not in self.links:
                raise ModelError(f"link '{l.name}' references unknown parent '{l.parent}'")
            if l.mass <= 0.0:
                raise ModelError(f"link '{l.name}' has non-positive mass {l.mass}")
            if l.joint is not None:
                j = l.joint
                if j.type not in ("revolute", "continuous"):
                    raise ModelError(f"joint '{j.name}' has unsupported type '{j.type}'")
                if j.velocity_limit <= 0 or j.acceleration_limit <= 0:
                    raise ModelError(f"joint '{j.name}' needs positive velocity/acceleration limits")
                if j.type == "revolute" and j.limits is None:
                    raise ModelError(f"revolute joint '{j.name}' needs position limits")
                if j.limits is not None and j.limits[0] >= j.limits[1]:
                    raise ModelError(f"joint '{j.name}' has empty limit range")
        # cycle check via walk to root
        for l in self.links.values():
            seen = set()
            cur = l
            while cur.parent is not None:
                if cur.name in seen:
                    raise ModelError(f"cycle detected at link '{cur.name}'")
                seen.add(cur.name)
                cur = self.links[cur.parent]

    def _topological_order(self) -> list[str]:
        children: dict[str, list[str]] = {n: [] for n in self.links}
        for l in self.links.values():
            if l.parent is not None:
                children[l.parent].append(l.name)
        order = []
        stack = [self.root]
        while stack:
            n = stack.pop()
            order.append(n)
            stack.extend(sorted(children[n], reverse=True))
        return order

    def _validate_limbs(self):
        for limb in self.limbs.values():
            for jn in limb.joints:
                if jn not in self.joint_index:
                    raise ModelError(f"limb '{limb.name}' references unknown joint '{jn}'")
            if limb.tip not in self.links:
                raise ModelError(f"limb '{limb.name}' references unknown tip link '{limb.tip}'")
            if limb.kind == "leg":
                if len(limb.joints) != LIMB_LEG_JOINTS:
                    raise ModelError(
                        f"leg '{limb.name}' must have {LIMB_LEG_JOINTS} chain joints, "
                        f"got {len(limb.joints)}")
                for jn in limb.joints:
                    if self._joint_by_name(jn).type != "revolute":
                        raise ModelError(f"leg chain joint '{jn}' must be revolute")
                for extra in (limb.steer_joint, limb.wheel_joint):
                    if extra is None:
                        raise ModelError(f"leg '{limb.name}' needs steer and wheel joints")
                    if self._joint_by_name(extra).type != "continuous":
                        raise ModelError(f"leg joint '{extra}' must be continuous")
            elif limb.kind == "arm":
                if len(limb.joints) != LIMB_ARM_JOINTS:
                    raise ModelError(
                        f"arm '{limb.name}' must have {LIMB_ARM_JOINTS} chain joints, "
                        f"got {len(limb.joints)}")

    def _joint_by_name(self, name: str) -> Joint:
        link = self._link_of_joint.get(name)
        if link is None:
            raise ModelError(f"unknown joint '{name}'")
        return self.links[link].joint

    # -- queries ------------------------------------------------------------

    @property
    def legs(self) -> list[Limb]:
        return [l for l in self.limbs.values() if l.kind == "leg"]

    @property
    def arms(self) -> list[Limb]:
        return [l for l in self.limbs.values() if l.kind == "arm"]

    def limb(self, name: str) -> Limb:
        if name not in self.limbs:
            raise KeyError(f"unknown limb '{name}'")
        return self.limbs[name]

    def joint(self, name: str) -> Joint:
        return self._joint_by_name(name)

    def link_of_joint(self, joint_name: str) -> str:
        return self._link_of_joint[joint_name]

    def chain_to(self, link_name: str) -> list[Link]:
        """Links from root to link_name, root first."""
        if link_name not in self.links:
            raise KeyError(f"unknown link '{link_name}'")
        chain = []
        cur = self.links[link_name]
        while cur is not None:
            chain.append(cur)
            cur = self.links[cur.parent] if cur.parent else None
        return chain[::-1]

    @property
    def fast(self) -> "FastKin":
        if not hasattr(self, "_fast"):
            self._fast = FastKin(self)
        return self._fast


@dataclass
class JointState:
    """Joint positions/velocities/torques indexed in model joint order."""

    positions: np.ndarray
    velocities: np.ndarray | None = None
    torques: np.ndarray | None = None
    timestamp: float = 0.0

    @classmethod
    def zeros(cls, model: RobotModel) -> "JointState":
        return cls(np.zeros(model.n_joints))

    def copy(self) -> "JointState":
        return JointState(
            self.positions.copy(),
            None if self.velocities is None else self.velocities.copy(),
            None if self.torques is None else self.torques.copy(),
            self.timestamp,
        )

    def get(self, model: RobotModel, joint_name: str) -> float:
        return float(self.positions[model.joint_index[joint_name]])

    def with_updates(self, model: RobotModel, updates: dict[str, float]) -> "JointState":
        out = self.copy()
        for name, value in updates.items():
            out.positions[model.joint_index[name]] = value
        return out


def check_limits(model: RobotModel, q: JointState, tolerance: float = 1e-6) -> list[str]:
    """Names of joints outside their position limits (beyond tolerance)."""
    bad = []
    for i, name in enumerate(model.joint_names):
        lo, hi = model.position_lower[i], model.position_upper[i]
        p = q.positions[i]
        if p < lo - tolerance or p > hi + tolerance:
            bad.append(name)
    return bad


# -- forward kinematics -----------------------------------------------------


def fk_all(model: RobotModel, q: JointState) -> dict[str, Pose6D]:
    """Poses of every link in the base frame, one tree walk."""
    out: dict[str, Pose6D] = {}
    for name in model.link_order:
        link = model.links[name]
        if link.parent is None:
            out[name] = Pose6D.identity()
            continue
        pose = out[link.parent].compose(link.origin)
        if link.joint is not None:
            angle = q.positions[model.joint_index[link.joint.name]]
            if angle != 0.0:
                rot = quat_from_axis_angle(link.joint.axis, angle)
                pose = Pose6D(pose.position, quat_multiply(pose.orientation, rot))
        out[name] = pose
    return out


def forward_kinematics(model: RobotModel, q: JointState, link_name: str) -> Pose6D:
    """Pose of one link in the base frame."""
    if link_name not in model.links:
        raise KeyError(f"unknown link '{link_name}'")
    bad = check_limits(model, q)
    if bad:
        logger.warning("FK evaluated outside joint limits: %s", ", ".join(bad))
    pose = Pose6D.identity()
    for link in model.chain_to(link_name):
        if link.parent is None:
            continue
        pose = pose.compose(link.origin)
        if link.joint is not None:
            angle = q.positions[model.joint_index[link.joint.name]]
            rot = quat_from_axis_angle(link.joint.axis, angle)
            pose = Pose6D(pose.position, quat_multiply(pose.orientation, rot))
    return pose


def limb_jacobian(model: RobotModel, q: JointState, limb_name: str,
                  tip_link: str | None = None) -> np.ndarray:
    """Geometric Jacobian (6 x n) of the limb tip, base frame, linear rows first."""
    limb = model.limb(limb_name)
    tip = tip_link or limb.tip
    poses = fk_all(model, q)
    p_tip = poses[tip].position
    cols = []
    for jn in limb.joints:
        link = model.links[model.link_of_joint(jn)]
        pose = poses[link.name]
        axis = quat_rotate(pose.orientation, link.joint.axis)
        lin = np.cross(axis, p_tip - pose.position)
        cols.append(np.concatenate([lin, axis]))
    return np.column_stack(cols)


def center_of_mass(model: RobotModel, q: JointState) -> np.ndarray:
    """Mass-weighted CoM of all links in the base frame."""
    poses = fk_all(model, q)
    acc = np.zeros(3)
    for name, link in model.links.items():
        acc += link.mass * poses[name].transform_point(link.com)
    return acc / model.total_mass


def limb_gravity_torques(model: RobotModel, q: JointState, limb_name: str) -> np.ndarray:
    """Static holding torque per chain joint against gravity on the limb's links.

    Positive = torque the actuator must exert to keep the limb still under
    gravity alone (no external contact).
    """
    limb = model.limb(limb_name)
    poses = fk_all(model, q)
    # links distal to each joint: everything in the subtree of the joint's link
    children: dict[str, list[str]] = {n: [] for n in model.links}
    for l in model.links.values():
        if l.parent:
            children[l.parent].append(l.name)

    def subtree(root: str) -> list[str]:
        out, stack = [], [root]
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(children[n])
        return out

    g_force = np.array([0.0, 0.0, -GRAVITY])
    torques = np.zeros(len(limb.joints))
    for k, jn in enumerate(limb.joints):
        jlink = model.links[model.link_of_joint(jn)]
        jpose = poses[jlink.name]
        axis = quat_rotate(jpose.orientation, jlink.joint.axis)
        tau = 0.0
        for ln in subtree(jlink.name):
            link = model.links[ln]
            c = poses[ln].transform_point(link.com)
            tau += np.dot(axis, np.cross(c - jpose.position, link.mass * g_force))
        torques[k] = -tau  # actuator opposes the gravity moment
    return torques


# -- fast whole-robot kinematics ----------------------------------------------


def _cross_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cross product without np.cross overhead."""
    out = np.empty(np.broadcast(a, b).shape)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    c = np.cos(angle)
    s = np.sin(angle)
    C = 1.0 - c
    return np.array([
        [x * x * C + c, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, y * y * C + c, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, z * z * C + c],
    ])


class FastKin:
    """Array-based FK shared by all per-tick consumers (one tree walk).

    Produces the same numbers as the Pose6D-based functions (tested), an
    order of magnitude faster for whole-robot queries in the control loop.
    """

    def __init__(self, model: RobotModel):
        self.model = model
        order = model.link_order
        self.index = {n: i for i, n in enumerate(order)}
        L = len(order)
        self.parent = np.full(L, -1, dtype=int)
        self.origin_R = np.empty((L, 3, 3))
        self.origin_p = np.empty((L, 3))
        self.joint_axis = np.zeros((L, 3))
        self.joint_idx = np.full(L, -1, dtype=int)
        self.mass = np.empty(L)
        self.com = np.empty((L, 3))
        for i, name in enumerate(order):
            link = model.links[name]
            if link.parent is not None:
                self.parent[i] = self.index[link.parent]
            self.origin_R[i] = quat_to_matrix(link.origin.orientation)
            self.origin_p[i] = link.origin.position
            self.mass[i] = link.mass
            self.com[i] = link.com
            if link.joint is not None:
                self.joint_axis[i] = link.joint.axis
                self.joint_idx[i] = model.joint_index[link.joint.name]
        self.total_mass = float(self.mass.sum())

        # per-limb structures: joint link rows, tip row, distal mass masks
        children: dict[int, list[int]] = {i: [] for i in range(L)}
        for i, par in enumerate(self.parent):
            if par >= 0:
                children[par].append(i)

        def subtree(i):
            out, stack = [], [i]
            while stack:
                k = stack.pop()
                out.append(k)
                stack.extend(children[k])
            return out

        self.limb_rows: dict[str, dict] = {}
        for limb in model.limbs.values():
            rows = [self.index[model.link_of_joint(j)] for j in limb.joints]
            distal = np.zeros((len(rows), L), dtype=bool)
            for k, r in enumerate(rows):
                distal[k, subtree(r)] = True
            self.limb_rows[limb.name] = {
                "rows": np.array(rows),
                "tip": self.index[limb.tip],
                "distal": distal,
            }

    def table(self, qpos: np.ndarray):
        """(R (L,3,3), p (L,3)) poses of every link in base frame."""
        L = len(self.parent)
        R = np.empty((L, 3, 3))
        p = np.empty((L, 3))
        for i in range(L):
            par = self.parent[i]
            if par < 0:
                R[i] = np.eye(3)
                p[i] = 0.0
                continue
            p[i] = p[par] + R[par] @ self.origin_p[i]
            Ri = R[par] @ self.origin_R[i]
            j = self.joint_idx[i]
            if j >= 0 and qpos[j] != 0.0:
                Ri = Ri @ _rodrigues(self.joint_axis[i], qpos[j])
            R[i] = Ri
        return R, p

    def link_position(self, table, name: str) -> np.ndarray:
        return table[1][self.index[name]]

    def center_of_mass(self, table) -> np.ndarray:
        R, p = table
        world_com = p + np.einsum("lij,lj->li", R, self.com)
        return (self.mass[:, None] * world_com).sum(axis=0) / self.total_mass

    def limb_jacobian(self, table, limb_name: str) -> np.ndarray:
        R, p = table
        info = self.limb_rows[limb_name]
        rows = info["rows"]
        tip = p[info["tip"]]
        axes = np.einsum("kij,kj->ki", R[rows], self.joint_axis[rows])
        lin = _cross_rows(axes, tip - p[rows])
        return np.vstack([lin.T, axes.T])

    def limb_gravity(self, table, limb_name: str) -> np.ndarray:
        R, p = table
        info = self.limb_rows[limb_name]
        rows = info["rows"]
        world_com = p + np.einsum("lij,lj->li", R, self.com)
        g_force = self.mass[:, None] * np.array([0.0, 0.0, -GRAVITY])
        axes = np.einsum("kij,kj->ki", R[rows], self.joint_axis[rows])
        out = np.empty(len(rows))
        for k, r in enumerate(rows):
            mask = info["distal"][k]
            moments = _cross_rows(world_com[mask] - p[r], g_force[mask])
            out[k] = -float(np.sum(moments @ axes[k]))
        return out


# -- batched chain evaluation ------------------------------------------------


class LimbChain:
    """Vectorized FK over one limb for many configurations at once.

    The rest of the robot is frozen at ``q_rest``; only the limb's chain
    joints vary. Used by the trajectory optimizer where per-config python
    FK would dominate runtime.
    """

    def __init__(self, model: RobotModel, limb_name: str, q_rest: JointState):
        self.model = model
        self.limb = model.limb(limb_name)
        # walk from base to tip once, recording fixed transforms between joints
        chain_links = model.chain_to(self.limb.tip)
        jset = set(self.limb.joints)
        self._steps = []  # per chain joint: (R_fix, p_fix, axis) accumulated since previous
        R = np.eye(3)
        p = np.zeros(3)
        self._masses, self._coms_local, self._mass_owner = [], [], []
        seg = 0
        for link in chain_links:
            if link.parent is None:
                continue
            Ro = quat_to_matrix(link.origin.orientation)
            p = p + R @ link.origin.position
            R = R @ Ro
            if link.joint is not None and link.joint.name in jset:
                self._steps.append((R.copy(), p.copy(), np.asarray(link.joint.axis, float)))
                R = np.eye(3)
                p = np.zeros(3)
                seg += 1
            elif link.joint is not None:
                # non-chain joint inside the chain (e.g. frozen wheel): bake its angle in
                ang = q_rest.positions[model.joint_index[link.joint.name]]
                R = R @ quat_to_matrix(quat_from_axis_angle(link.joint.axis, ang))
            if link.mass > 0:
                self._masses.append(link.mass)
                self._coms_local.append(np.asarray(link.com, float))
                self._mass_owner.append((seg, link.name, R.copy(), p.copy()))
        if len(self._steps) != len(self.limb.joints):
            raise ModelError(f"limb '{limb_name}' chain joints not on the path to tip")
        self._tip_R = R
        self._tip_p = p
        self.n = len(self._steps)

    @staticmethod
    def _axis_angle_matrices(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
        """Rotation matrices (B,3,3) about a fixed axis for a batch of angles."""
        x, y, z = axis
        c = np.cos(angles)
        s = np.sin(angles)
        C = 1.0 - c
        B = angles.shape[0]
        m = np.empty((B, 3, 3))
        m[:, 0, 0] = x * x * C + c
        m[:, 0, 1] = x * y * C - z * s
        m[:, 0, 2] = x * z * C + y * s
        m[:, 1, 0] = y * x * C + z * s
        m[:, 1, 1] = y * y * C + c
        m[:, 1, 2] = y * z * C - x * s
        m[:, 2, 0] = z * x * C - y * s
        m[:, 2, 1] = z * y * C + x * s
        m[:, 2, 2] = z * z * C + z * 0 + c
        return m

    def batch_fk(self, Q: np.ndarray):
        """FK for configurations Q (B, n).

        Returns dict with joint origins (B,n,3), joint axes (B,n,3),
        tip rotation (B,3,3), tip position (B,3), per-joint frame rotations
        (B,n,3,3) and positions after the joint rotation.
        """
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        B = Q.shape[0]
        R = np.broadcast_to(np.eye(3), (B, 3, 3)).copy()
        p = np.zeros((B, 3))
        origins = np.empty((B, self.n, 3))
        axes = np.empty((B, self.n, 3))
        frames_R = np.empty((B, self.n, 3, 3))
        frames_p = np.empty((B, self.n, 3))
        for k, (R_fix, p_fix, axis) in enumerate(self._steps):
            p = p + np.einsum("bij,j->bi", R, p_fix)
            R = np.einsum("bij,jk->bik", R, R_fix)
            ax_w = np.einsum("bij,j->bi", R, axis)
            origins[:, k] = p
            axes[:, k] = ax_w
            R = np.einsum("bij,bjk->bik", R, self._axis_angle_matrices(axis, Q[:, k]))
            frames_R[:, k] = R
            frames_p[:, k] = p
        tip_p = p + np.einsum("bij,j->bi", R, self._tip_p)
        tip_R = np.einsum("bij,jk->bik", R, self._tip_R)
        return {
            "origins": origins,
            "axes": axes,
            "frames_R": frames_R,
            "frames_p": frames_p,
            "tip_R": tip_R,
            "tip_p": tip_p,
        }

    def points_from_fk(self, fk: dict, local_points: list[tuple[int, np.ndarray]]) -> np.ndarray:
        """World positions (B, P, 3) of points attached to chain segments.

        ``local_points``: (segment index 1..n, offset in the frame after that
        joint). Segment 0 would be the fixed root and is not supported.
        """
        out = np.empty((fk["tip_p"].shape[0], len(local_points), 3))
        for i, (seg, off) in enumerate(local_points):
            k = seg - 1
            out[:, i] = fk["frames_p"][:, k] + np.einsum(
                "bij,j->bi", fk["frames_R"][:, k], np.asarray(off, float))
        return out

    def batch_points(self, Q: np.ndarray, local_points: list[tuple[int, np.ndarray]]) -> np.ndarray:
        return self.points_from_fk(self.batch_fk(Q), local_points)

    def gravity_from_fk(self, fk: dict) -> np.ndarray:
        """Static gravity holding torques (B, n) for the limb's own links."""
        B = fk["tip_p"].shape[0]
        # world CoM of each massive link
        coms = np.empty((B, len(self._masses), 3))
        for i, ((seg, _name, R_loc, p_loc), com) in enumerate(
                zip(self._mass_owner, self._coms_local)):
            local = p_loc + R_loc @ com
            if seg == 0:
                coms[:, i] = local  # before the first joint: constant
            else:
                k = seg - 1
                coms[:, i] = fk["frames_p"][:, k] + np.einsum(
                    "bij,j->bi", fk["frames_R"][:, k], local)
        masses = np.asarray(self._masses)
        g = np.array([0.0, 0.0, -GRAVITY])
        tau = np.zeros((B, self.n))
        for k in range(self.n):
            rel = coms - fk["origins"][:, k][:, None, :]
            moment = np.cross(rel, masses[None, :, None] * g)
            contrib = np.einsum("bpj,bj->bp", moment, fk["axes"][:, k])
            # only links distal to joint k contribute
            distal = np.array([seg > k for seg, *_ in self._mass_owner])
            tau[:, k] = -contrib[:, distal].sum(axis=1)
        return tau

    def batch_gravity_torques(self, Q: np.ndarray) -> np.ndarray:
        return self.gravity_from_fk(self.batch_fk(Q))


# -- model file I/O ----------------------------------------------------------


def _line_of(text: str, needle: str) -> int | None:
    idx = text.find(needle)
    if idx < 0:
        return None
    return text.count("\n", 0, idx) + 1


def load_model(path_or_text, source_name: str = "<model>") -> RobotModel:
    """Load and validate a model JSON document.

    Validation failures raise ModelError with the file line of the offending
    entry where it can be located.
    """
    if hasattr(path_or_text, "read"):
        text = path_or_text.read()
    elif isinstance(path_or_text, str) and path_or_text.lstrip().startswith("{"):
        text = path_or_text
    else:
        source_name = str(path_or_text)
        with open(path_or_text) as f:
            text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelError(f"{source_name}:{e.lineno}: invalid JSON: {e.msg}") from None

    def fail(entity_name: str, message: str):
        line = _line_of(text, f'"{entity_name}"')
        loc = f"{source_name}:{line}" if line else source_name
        raise ModelError(f"{loc}: {message}")

    for key in ("name", "wheel_radius", "links", "limbs"):
        if key not in doc:
            raise ModelError(f"{source_name}: missing top-level key '{key}'")
    if doc["wheel_radius"] <= 0:
        fail("wheel_radius", "wheel_radius must be positive")

    links = []
    for entry in doc["links"]:
        name = entry.get("name", "?")
        try:
            origin = Pose6D.from_xyz_rpy(entry.get("xyz", [0, 0, 0]), entry.get("rpy", [0, 0, 0]))
            j = None
            if "joint" in entry:
                jd = entry["joint"]
                j = Joint(
                    name=jd["name"],
                    type=jd["type"],
                    axis=np.asarray(jd["axis"], dtype=float),
                    limits=tuple(jd["limits"]) if jd.get("limits") else None,
                    velocity_limit=float(jd["velocity_limit"]),
                    acceleration_limit=float(jd["acceleration_limit"]),
                )
                if abs(np.linalg.norm(j.axis) - 1.0) > 1e-6:
                    fail(jd["name"], f"joint '{jd['name']}' axis is not a unit vector")
            links.append(Link(
                name=name,
                parent=entry.get("parent"),
                origin=origin,
                mass=float(entry["mass"]),
                com=np.asarray(entry.get("com", [0, 0, 0]), dtype=float),
                joint=j,
            ))
        except (KeyError, TypeError, ValueError) as e:
            fail(name, f"malformed link '{name}': {e}")

    limbs = {}
    for lname, ld in doc["limbs"].items():
        limbs[lname] = Limb(
            name=lname,
            kind=ld["kind"],
            joints=tuple(ld["joints"]),
            tip=ld["tip"],
            steer_joint=ld.get("steer_joint"),
            wheel_joint=ld.get("wheel_joint"),
        )

    try:
        return RobotModel(doc["name"], links, limbs, float(doc["wheel_radius"]))
    except ModelError as e:
        # attach a line number when the message names an entity present in the file
        msg = str(e)
        for token in msg.replace("'", " ").split():
            line = _line_of(text, f'"{token}"')
            if line:
                raise ModelError(f"{source_name}:{line}: {msg}") from None
        raise


def default_model() -> RobotModel:
    """The bundled desk-scale centaur model."""
    ref = resources.files("centaursim.data").joinpath("centaur_desk.json")
    return load_model(ref.read_text(), source_name="centaur_desk.json")


def default_stand_positions(model: RobotModel) -> np.ndarray:
    """Neutral standing configuration: knees bent, arms tucked.

    Feet sit 0.10 m fore (front legs) / aft (rear legs) of the hips; a foot
    directly under its hip would leave the hip-yaw axis without a lever arm
    and make the leg chain singular at stance.
    """
    q = np.zeros(model.n_joints)
    updates = {}
    # 0.35*sin(a) + 0.35*sin(a+b) = 0.10 with the below-ankle stack vertical
    alpha, beta, gamma = 0.6, -0.88268, 0.28268
    for leg in model.legs:
        hip_yaw, hip_pitch, knee, ankle_pitch, ankle_yaw = leg.joints
        sign = -1.0 if leg.name.startswith("front") else 1.0
        updates[hip_pitch] = sign * alpha
        updates[knee] = sign * beta
        updates[ankle_pitch] = sign * gamma
    for arm in model.arms:
        sh_pitch, sh_roll, sh_yaw, elbow, wr_yaw, wr_pitch, wr_roll = arm.joints
        sign = 1.0 if "left" in arm.name else -1.0
        updates[sh_pitch] = 0.3
        updates[sh_roll] = sign * 0.25
        updates[elbow] = -1.2
    for name, val in updates.items():
        q[model.joint_index[name]] = val
    return q
