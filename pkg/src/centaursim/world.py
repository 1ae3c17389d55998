"""Deterministic kinematic world.

Joint targets are tracked by a first-order servo; the base pose comes from
twist integration while driving and from the stance-feet rigid fit while
stepping; foot forces follow a penetration stiffness model with the base
height solved for quasi-static force balance. Everything is a pure function
of (scenario, command history), which is what makes session replay
bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .contact import ContactDetector, default_contact_threshold, support_state
from .model import GRAVITY, JointState, RobotModel
from .omnidrive import BaseTwist, integrate_base
from .shapes import BoxPrimitive, CylinderPrimitive, DrillParams, drill_primitives
from .transforms import (
    Pose6D,
    quat_from_axis_angle,
    quat_multiply,
    quat_to_matrix,
    matrix_to_quat,
)

SERVO_TIME_CONSTANT = 0.03  # s
SETTLE_TIME_CONSTANT = 0.02  # s, vertical/attitude settling while driving
CONTACT_STIFFNESS = 50_000.0  # N/m
FORCE_CAP = 4000.0  # N per foot
DEFAULT_CONTROL_PERIOD = 0.01  # s
SCAN_INTERVAL = 5.0  # s of sim time per full panoramic scan
MAX_RAY_RANGE = 8.0  # m

FOOT_KEYS = ("fl", "fr", "rl", "rr")
FOOT_LIMB = {"fl": "front_left_leg", "fr": "front_right_leg",
             "rl": "rear_left_leg", "rr": "rear_right_leg"}


# -- terrain -------------------------------------------------------------------


@dataclass
class Block:
    center: np.ndarray  # (2,)
    size: np.ndarray  # (2,)
    height: float

    def height_at(self, x, y):
        inside = (np.abs(x - self.center[0]) <= self.size[0] / 2) & \
            (np.abs(y - self.center[1]) <= self.size[1] / 2)
        return np.where(inside, self.height, 0.0)


@dataclass
class Ramp:
    x0: float
    x1: float
    incline_deg: float  # rises along +x, stays at the top beyond x1

    def height_at(self, x, y):
        rise = np.tan(np.radians(self.incline_deg))
        h = np.clip((x - self.x0), 0.0, self.x1 - self.x0) * rise
        return h


@dataclass
class Gap:
    x0: float
    x1: float
    depth: float

    def height_at(self, x, y):
        inside = (x >= self.x0) & (x <= self.x1)
        return np.where(inside, -self.depth, 0.0)


@dataclass
class Stairs:
    x0: float
    run: float
    rise: float
    count: int

    def height_at(self, x, y):
        step = np.floor((x - self.x0) / self.run) + 1
        step = np.clip(step, 0, self.count)
        return step * self.rise


class Terrain:
    """Height field assembled from primitives (max composition over flat ground)."""

    def __init__(self, primitives: list):
        self.primitives = primitives

    def height(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        h = np.zeros(np.broadcast(x, y).shape)
        for p in self.primitives:
            h = np.where(np.abs(ph := p.height_at(x, y)) > np.abs(h), ph, h)
        return h

    def height_one(self, x, y) -> float:
        return float(self.height(np.asarray([x]), np.asarray([y]))[0])


def terrain_from_dict(doc: dict, seed: int) -> Terrain:
    prims = []
    for p in doc.get("primitives", []):
        kind = p["type"]
        if kind == "block":
            prims.append(Block(np.array(p["center"]), np.array(p["size"]), p["height"]))
        elif kind == "ramp":
            prims.append(Ramp(p["x0"], p["x1"], p["incline_deg"]))
        elif kind == "gap":
            prims.append(Gap(p["x0"], p["x1"], p["depth"]))
        elif kind == "stairs":
            prims.append(Stairs(p["x0"], p["run"], p["rise"], p["count"]))
        elif kind == "block_field":
            prims.extend(expand_block_field(p, seed))
        else:
            raise ValueError(f"unknown terrain primitive '{kind}'")
    return Terrain(prims)


def expand_block_field(p: dict, scenario_seed: int) -> list[Block]:
    """Deterministic random field of blocks (step-field style)."""
    rng = np.random.default_rng(p.get("seed", scenario_seed))
    bx, by = p.get("block", [0.20, 0.20])
    hmin, hmax = p.get("height_range", [0.0, 0.10])
    fill = p.get("fill", 0.6)
    blocks = []
    x = p["x0"]
    while x < p["x1"] - 1e-9:
        y = p["y0"]
        while y < p["y1"] - 1e-9:
            if rng.random() < fill:
                h = float(np.round(rng.uniform(hmin, hmax), 3))
                if h > 1e-6:
                    blocks.append(Block(np.array([x + bx / 2, y + by / 2]),
                                        np.array([bx, by]), h))
            y += by
        x += bx
    return blocks


# -- scenario ------------------------------------------------------------------


@dataclass
class PlacedObject:
    object_id: str
    category: str
    params: DrillParams
    pose: Pose6D  # ground truth, world frame

    def primitives_world(self):
        return [(prim, self.pose) for prim in drill_primitives(self.params)]


@dataclass
class Scenario:
    name: str
    terrain: Terrain
    obstacles: list[BoxPrimitive]
    objects: list[PlacedObject]
    spawn_xy: np.ndarray
    spawn_yaw: float
    seed: int
    control_period: float = DEFAULT_CONTROL_PERIOD
    range_noise: float = 0.0
    sensor_height: float = 1.35  # above base origin
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        seed = int(doc.get("seed", 0))
        objects = []
        for o in doc.get("objects", []):
            params = DrillParams.from_dict(o["params"])
            pose = Pose6D.from_xyz_rpy(o["xyz"], [0.0, 0.0, o.get("yaw", 0.0)])
            objects.append(PlacedObject(o["id"], o.get("category", "drill"),
                                        params, pose))
        obstacles = [BoxPrimitive(np.array(b["center"]), np.array(b["half_extents"]))
                     for b in doc.get("obstacles", [])]
        return cls(
            name=doc.get("name", "unnamed"),
            terrain=terrain_from_dict(doc.get("terrain", {}), seed),
            obstacles=obstacles,
            objects=objects,
            spawn_xy=np.array(doc.get("spawn", {}).get("xy", [0.0, 0.0])),
            spawn_yaw=float(doc.get("spawn", {}).get("yaw", 0.0)),
            seed=seed,
            control_period=float(doc.get("control_period", DEFAULT_CONTROL_PERIOD)),
            range_noise=float(doc.get("range_noise", 0.0)),
            sensor_height=float(doc.get("sensor", {}).get("height", 1.35)),
            raw=doc,
        )

    @classmethod
    def load(cls, path: str) -> "Scenario":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def bundled_scenario_names() -> list[str]:
    root = resources.files("centaursim.data.scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_bundled_scenario(name: str, seed: int | None = None) -> Scenario:
    ref = resources.files("centaursim.data.scenarios").joinpath(f"{name}.json")
    try:
        doc = json.loads(ref.read_text())
    except FileNotFoundError:
        raise KeyError(f"unknown scenario '{name}' "
                       f"(available: {', '.join(bundled_scenario_names())})") from None
    if seed is not None:
        doc["seed"] = seed
    return Scenario.from_dict(doc)


# -- ray casting ---------------------------------------------------------------


def _ray_box(origins, dirs, box: BoxPrimitive):
    lo = box.center - box.half_extents
    hi = box.center + box.half_extents
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origins) / dirs
        t2 = (hi - origins) / dirs
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = (tmax >= np.maximum(tmin, 0.0))
    t = np.where(tmin > 0.0, tmin, tmax)
    return np.where(hit & (t > 1e-9), t, np.inf)


def _ray_cylinder(origins, dirs, cyl: CylinderPrimitive):
    a = cyl.axis
    rel = origins - cyl.base
    d_par = dirs @ a
    r_par = rel @ a
    d_perp = dirs - np.outer(d_par, a)
    r_perp = rel - np.outer(r_par, a)
    A = np.sum(d_perp * d_perp, axis=1)
    B = 2.0 * np.sum(d_perp * r_perp, axis=1)
    C = np.sum(r_perp * r_perp, axis=1) - cyl.radius ** 2
    disc = B * B - 4 * A * C
    t_side = np.full(len(origins), np.inf)
    ok = (disc >= 0) & (A > 1e-12)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    for sign in (-1.0, 1.0):
        t = np.where(ok, (-B + sign * sq) / (2 * np.maximum(A, 1e-12)), np.inf)
        z = r_par + t * d_par
        good = ok & (t > 1e-9) & (z >= 0.0) & (z <= cyl.length)
        t_side = np.where(good & (t < t_side), t, t_side)
    # end caps
    for cap_z in (0.0, cyl.length):
        denom = d_par
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (cap_z - r_par) / denom
        p_perp = r_perp + t[:, None] * d_perp
        good = (np.abs(denom) > 1e-12) & (t > 1e-9) & \
            (np.sum(p_perp * p_perp, axis=1) <= cyl.radius ** 2)
        t_side = np.where(good & (t < t_side), t, t_side)
    return t_side


def _ray_terrain(origins, dirs, terrain: Terrain, coarse=0.04, max_range=MAX_RAY_RANGE):
    """March then bisect: first crossing below the height field."""
    n = len(origins)
    ts = np.arange(coarse, max_range, coarse)
    t_hit = np.full(n, np.inf)
    alive = np.ones(n, dtype=bool)
    prev_t = np.zeros(n)
    for t in ts:
        if not alive.any():
            break
        p = origins[alive] + t * dirs[alive]
        below = p[:, 2] <= terrain.height(p[:, 0], p[:, 1])
        idx = np.where(alive)[0]
        hit_idx = idx[below]
        t_hit[hit_idx] = t
        alive[hit_idx] = False
    # bisection refine
    hits = np.isfinite(t_hit)
    if hits.any():
        lo = np.maximum(t_hit[hits] - coarse, 0.0)
        hi = t_hit[hits]
        o = origins[hits]
        d = dirs[hits]
        for _ in range(12):
            mid = 0.5 * (lo + hi)
            p = o + mid[:, None] * d
            below = p[:, 2] <= terrain.height(p[:, 0], p[:, 1])
            hi = np.where(below, mid, hi)
            lo = np.where(below, lo, mid)
        t_hit[hits] = hi
    return t_hit


def render_cloud(scenario: Scenario, sensor_pose: Pose6D, mode: str = "spherical",
                 rng: np.random.Generator | None = None,
                 n_azimuth: int = 160, n_elevation: int = 60,
                 fov_deg: float = 70.0, res: int = 64,
                 extra_boxes: list | None = None):
    """Ray-cast point cloud of terrain, obstacles and objects.

    Returns (points (N,3), labels list[str]); labels are "terrain",
    "obstacle" or the object id; the labels are the exact segmentation
    oracle.
    """
    if mode == "spherical":
        az = np.linspace(-np.pi, np.pi, n_azimuth, endpoint=False)
        el = np.linspace(np.radians(-75), np.radians(15), n_elevation)
        A, E = np.meshgrid(az, el)
        dirs_local = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A),
                               np.sin(E)], axis=-1).reshape(-1, 3)
    elif mode == "depth-frustum":
        half = np.radians(fov_deg / 2)
        us = np.linspace(-half, half, res)
        U, V = np.meshgrid(us, us)
        # camera looks along +x, pitched down 45 degrees
        pitch = np.radians(-45.0)
        base = np.stack([np.cos(V + pitch) * np.cos(U), np.cos(V + pitch) * np.sin(U),
                         np.sin(V + pitch)], axis=-1).reshape(-1, 3)
        dirs_local = base
    else:
        raise ValueError(f"unknown render mode '{mode}'")

    R = quat_to_matrix(sensor_pose.orientation)
    dirs = dirs_local @ R.T
    origins = np.broadcast_to(sensor_pose.position, dirs.shape).copy()

    best_t = _ray_terrain(origins, dirs, scenario.terrain)
    labels = np.full(len(dirs), "terrain", dtype=object)
    for box in scenario.obstacles:
        t = _ray_box(origins, dirs, box)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        labels[closer] = "obstacle"
    for box, pose in (extra_boxes or []):
        inv = pose.inverse()
        Ro = quat_to_matrix(inv.orientation)
        o_local = origins @ Ro.T + inv.position
        d_local = dirs @ Ro.T
        t = _ray_box(o_local, d_local, box)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        labels[closer] = "obstacle"
    for obj in scenario.objects:
        inv = obj.pose.inverse()
        Ro = quat_to_matrix(inv.orientation)
        o_local = origins @ Ro.T + inv.position
        d_local = dirs @ Ro.T
        for prim in drill_primitives(obj.params):
            if isinstance(prim, BoxPrimitive):
                t = _ray_box(o_local, d_local, prim)
            else:
                t = _ray_cylinder(o_local, d_local, prim)
            closer = t < best_t
            best_t = np.where(closer, t, best_t)
            labels[closer] = obj.object_id

    hit = np.isfinite(best_t)
    pts = origins[hit] + best_t[hit, None] * dirs[hit]
    labels = labels[hit]
    if scenario.range_noise > 0.0 and rng is not None:
        pts = pts + dirs[hit] * rng.normal(0.0, scenario.range_noise,
                                           size=(hit.sum(), 1))
    return pts, list(labels)


# -- world ---------------------------------------------------------------------


@dataclass
class FootState:
    position: np.ndarray  # wheel center, world
    ground_height: float
    force: float  # vertical contact force, N
    contact: bool
    anchored: bool


@dataclass
class WorldSnapshot:
    tick: int
    time: float
    base_pose: Pose6D
    q: JointState
    feet: dict[str, FootState]
    com_world: np.ndarray
    margin: float | None
    mode: str

    def foot_positions_base(self, model) -> np.ndarray:
        inv = self.base_pose.inverse()
        return np.array([inv.transform_point(self.feet[k].position)
                         for k in FOOT_KEYS])


def _kabsch(src: np.ndarray, dst: np.ndarray):
    """Rigid transform (R, t) minimizing |R src + t - dst|^2."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return R, cd - R @ cs


class World:
    """Single-owner simulation; advance only through step()."""

    def __init__(self, model: RobotModel, scenario: Scenario,
                 stand_positions: np.ndarray | None = None):
        from .model import default_stand_positions

        self.model = model
        self.scenario = scenario
        self.period = scenario.control_period
        self.rng = np.random.default_rng(scenario.seed)
        self.contact_threshold = default_contact_threshold(model)
        stand = default_stand_positions(model) if stand_positions is None else stand_positions
        self.q = JointState(stand.copy(), np.zeros(model.n_joints),
                            np.zeros(model.n_joints))
        self.detector = ContactDetector(self.contact_threshold, list(FOOT_KEYS))
        self.mode = "drive"
        self.anchors: dict[str, np.ndarray] = {}
        self.tick = 0
        self.time = 0.0
        # simplified hinged door panel: angle state driven by hand contact
        self.door = scenario.raw.get("door")
        self.door_angle = 0.0
        self._prev_tool: dict[str, np.ndarray] = {}
        self._spawn()

    def _spawn(self):
        fast = self.model.fast
        table = fast.table(self.q.positions)
        foot_z = fast.link_position(table, "fl_wheel")[2]
        x, y = self.scenario.spawn_xy
        ground = self.scenario.terrain.height_one(x, y)
        # 1 mm above resting height: contact settles within the first ticks
        z = ground - foot_z + self.model.wheel_radius + 0.001
        self.base_pose = Pose6D(np.array([x, y, z]),
                                quat_from_axis_angle([0, 0, 1], self.scenario.spawn_yaw))

    # -- mode/anchors ----------------------------------------------------------

    def set_mode(self, mode: str):
        if mode not in ("drive", "step"):
            raise ValueError(f"unknown world mode '{mode}'")
        if mode == "step" and self.mode != "step":
            self._capture_anchors()
        if mode == "drive":
            self.anchors.clear()
        self.mode = mode

    def _capture_anchors(self):
        fast = self.model.fast
        table = fast.table(self.q.positions)
        self.anchors = {
            k: self.base_pose.transform_point(fast.link_position(table, f"{k}_wheel"))
            for k in FOOT_KEYS
        }

    def release_anchor(self, foot: str):
        self.anchors.pop(foot, None)

    def capture_anchor(self, foot: str):
        fast = self.model.fast
        table = fast.table(self.q.positions)
        self.anchors[foot] = self.base_pose.transform_point(
            fast.link_position(table, f"{foot}_wheel"))

    # -- stepping --------------------------------------------------------------

    def step(self, joint_targets: np.ndarray, twist: BaseTwist | None = None) -> WorldSnapshot:
        """Advance one control period."""
        dt = self.period
        if np.any(~np.isfinite(joint_targets)):
            raise RuntimeError("joint target is NaN/inf; simulation halted")
        alpha = 1.0 - np.exp(-dt / SERVO_TIME_CONSTANT)
        new_q = self.q.positions + (joint_targets - self.q.positions) * alpha
        self.q.velocities = (new_q - self.q.positions) / dt
        self.q.positions = new_q

        table = self.model.fast.table(self.q.positions)
        if self.door is not None:
            self._update_door(table)
        if self.mode == "drive":
            if twist is not None and not twist.is_zero:
                self.base_pose = integrate_base(self.base_pose, twist, dt)
            self._settle_base(dt, table)
        else:
            self._fit_base_to_anchors(table)

        snapshot = self._sense(table)
        self.tick += 1
        self.time = self.tick * self.period
        return snapshot

    def door_handle_world(self) -> np.ndarray | None:
        if self.door is None:
            return None
        hx, hy = self.door["hinge_xy"]
        w = self.door["width"]
        frac = self.door.get("handle_offset", 0.65) / w if self.door.get(
            "handle_offset", 0.65) > 1.0 else self.door.get("handle_offset", 0.65)
        a = self.door_angle
        d = np.array([np.sin(a), -np.cos(a), 0.0])  # free-edge direction
        p = np.array([hx, hy, 0.0]) + w * frac * d
        p[2] = self.door.get("handle_height", 1.0)
        return p

    def door_boxes(self):
        if self.door is None:
            return []
        hx, hy = self.door["hinge_xy"]
        w = self.door["width"]
        h = self.door.get("height", 1.6)
        a = self.door_angle
        from .transforms import quat_from_axis_angle as _qaa
        pose = Pose6D(np.array([hx, hy, 0.0]),
                      _qaa([0, 0, 1], a))
        box = BoxPrimitive(np.array([0.0, -w / 2, h / 2]),
                           np.array([0.02, w / 2, h / 2]))
        return [(box, pose)]

    def _update_door(self, table):
        handle = self.door_handle_world()
        fast = self.model.fast
        Rb = quat_to_matrix(self.base_pose.orientation)
        for arm in self.model.arms:
            tool_b = fast.link_position(table, arm.tip)
            tool_w = Rb @ tool_b + self.base_pose.position
            prev = self._prev_tool.get(arm.name)
            self._prev_tool[arm.name] = tool_w
            if prev is None or np.linalg.norm(tool_w - handle) > 0.08:
                continue
            # project the hand motion onto the handle arc
            hx, hy = self.door["hinge_xy"]
            r = handle[:2] - np.array([hx, hy])
            tangent = np.array([-r[1], r[0]]) / max(np.linalg.norm(r), 1e-9)
            advance = float(np.dot((tool_w - prev)[:2], tangent))
            self.door_angle = float(np.clip(
                self.door_angle + advance / max(np.linalg.norm(r), 1e-9), 0.0, 2.2))

    def _foot_world(self, table) -> dict[str, np.ndarray]:
        fast = self.model.fast
        R = quat_to_matrix(self.base_pose.orientation)
        t = self.base_pose.position
        return {k: R @ fast.link_position(table, f"{k}_wheel") + t
                for k in FOOT_KEYS}

    def _settle_base(self, dt: float, table):
        """Quasi-static vertical/attitude resolution against the terrain."""
        yaw = self.base_pose.yaw()
        fast = self.model.fast
        feet_b = np.array([fast.link_position(table, f"{k}_wheel") for k in FOOT_KEYS])
        for _ in range(2):
            Rb = quat_to_matrix(self.base_pose.orientation)
            feet_w = feet_b @ Rb.T + self.base_pose.position
            ground = self.scenario.terrain.height(feet_w[:, 0], feet_w[:, 1])
            # support plane fit (least squares)
            A = np.column_stack([feet_w[:, 0], feet_w[:, 1], np.ones(4)])
            coef, *_ = np.linalg.lstsq(A, ground, rcond=None)
            a, b, _ = coef
            normal = np.array([-a, -b, 1.0])
            normal /= np.linalg.norm(normal)
            # orientation: yaw about z, then tilt mapping z to the plane normal
            z = np.array([0.0, 0.0, 1.0])
            axis = np.cross(z, normal)
            s = np.linalg.norm(axis)
            tilt = quat_from_axis_angle(axis / s, np.arcsin(min(s, 1.0))) if s > 1e-12 \
                else np.array([0.0, 0.0, 0.0, 1.0])
            target_q = quat_multiply(tilt, quat_from_axis_angle([0, 0, 1], yaw))
            # vertical force balance: sum k*penetration = weight
            R = quat_to_matrix(target_q)
            feet_rot = feet_b @ R.T
            # solve for base z: penetration_i = ground_i + r - (z + feet_rot_z_i)
            need = self.model.total_mass * GRAVITY / CONTACT_STIFFNESS
            offs = ground + self.model.wheel_radius - feet_rot[:, 2]
            # want sum(max(0, offs - z)) = need; decreasing in z
            lo, hi = float(offs.min() - need), float(offs.max())
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                tot = float(np.maximum(0.0, offs - mid).sum())
                if tot > need:
                    lo = mid
                else:
                    hi = mid
            target_z = 0.5 * (lo + hi)
            blend = 1.0 - np.exp(-dt / SETTLE_TIME_CONSTANT)
            pos = self.base_pose.position.copy()
            pos[2] += (target_z - pos[2]) * blend
            q_now = self.base_pose.orientation
            q_new = q_now + (target_q - q_now) * blend  # small-angle nlerp
            self.base_pose = Pose6D(pos, q_new / np.linalg.norm(q_new))

    def _fit_base_to_anchors(self, table):
        if len(self.anchors) < 3:
            return
        fast = self.model.fast
        names = sorted(self.anchors)
        src = np.array([fast.link_position(table, f"{k}_wheel") for k in names])
        dst = np.array([self.anchors[k] for k in names])
        R, t = _kabsch(src, dst)
        self.base_pose = Pose6D(t, matrix_to_quat(R))

    def _sense(self, table) -> WorldSnapshot:
        fast = self.model.fast
        feet_w = self._foot_world(table)
        R_base = quat_to_matrix(self.base_pose.orientation)

        forces = {}
        for k in FOOT_KEYS:
            p = feet_w[k]
            ground = self.scenario.terrain.height_one(p[0], p[1])
            pen = max(0.0, ground + self.model.wheel_radius - p[2])
            forces[k] = (min(CONTACT_STIFFNESS * pen, FORCE_CAP), ground)

        # distribute among anchored feet so their telemetry stays physical
        if self.mode == "step" and len(self.anchors) >= 3:
            com_b = fast.center_of_mass(table)
            com_w = self.base_pose.transform_point(com_b)
            free = [k for k in FOOT_KEYS if k not in self.anchors]
            free_force = sum(forces[k][0] for k in free)
            share = self._static_distribution(
                {k: feet_w[k] for k in self.anchors}, com_w,
                max(self.model.total_mass * GRAVITY - free_force, 0.0))
            for k, f in share.items():
                forces[k] = (f, forces[k][1])

        self.q.torques = np.zeros(self.model.n_joints)
        feet = {}
        for k in FOOT_KEYS:
            f_z, ground = forces[k]
            wrench = np.zeros(6)
            wrench[:3] = R_base.T @ np.array([0.0, 0.0, f_z])
            leg = FOOT_LIMB[k]
            tau = fast.limb_gravity(table, leg) + \
                fast.limb_jacobian(table, leg).T @ wrench
            idx = [self.model.joint_index[j] for j in self.model.limb(leg).joints]
            self.q.torques[idx] = tau
            contact = self.detector.update(k, f_z)
            feet[k] = FootState(feet_w[k], ground, f_z, contact,
                                k in self.anchors)

        com_w = self.base_pose.transform_point(fast.center_of_mass(table))
        contact_pts = {k: feet[k].position[:2] for k in FOOT_KEYS if feet[k].contact}
        margin = None
        if len(contact_pts) >= 3:
            st = support_state(contact_pts, com_w)
            margin = st.margin
        return WorldSnapshot(self.tick, self.time, self.base_pose.copy(),
                             self.q.copy(), feet, com_w, margin, self.mode)

    @staticmethod
    def _static_distribution(points: dict[str, np.ndarray], com: np.ndarray,
                             weight: float) -> dict[str, float]:
        """Minimum-norm vertical forces balancing weight and xy moments."""
        names = sorted(points)
        P = np.array([points[k] for k in names])
        A = np.vstack([np.ones(len(names)),
                       P[:, 0] - com[0],
                       P[:, 1] - com[1]])
        b = np.array([weight, 0.0, 0.0])
        f, *_ = np.linalg.lstsq(A, b, rcond=None)
        f = np.maximum(f, 0.0)
        if f.sum() > 0:
            f *= weight / f.sum()
        return dict(zip(names, f))

    # -- sensing ----------------------------------------------------------------

    def sensor_pose(self) -> Pose6D:
        return self.base_pose.compose(
            Pose6D(np.array([0.1, 0.0, self.scenario.sensor_height])))

    def render(self, mode: str = "spherical", **kw):
        return render_cloud(self.scenario, self.sensor_pose(), mode=mode,
                            rng=self.rng, extra_boxes=self.door_boxes(), **kw)

    # -- replay support ----------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "tick": self.tick,
            "time": self.time,
            "base_position": [float(v) for v in self.base_pose.position],
            "base_orientation": [float(v) for v in self.base_pose.orientation],
            "positions": [float(v) for v in self.q.positions],
            "door_angle": self.door_angle,
            "mode": self.mode,
            "anchors": {k: [float(v) for v in a] for k, a in sorted(self.anchors.items())},
        }
