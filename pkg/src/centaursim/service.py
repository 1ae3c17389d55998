"""Operator-facing session: command routing, telemetry, logging, replay.

One Session owns the whole control stack for one simulated robot. Commands
enter a queue and are applied only at tick boundaries, telemetry leaves at a
fixed divisor of the control rate, and every applied command plus every
emitted frame goes into an append-only hash-chained JSONL log, which is what
makes sessions replayable bit-exactly.

Mode rules: driving, stepping and leg keyframes are mutually exclusive (the
legs have one owner at a time); arm motions are independent and may run
during any of them.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
import time
from dataclasses import dataclass, field
from queue import Empty, Queue

import numpy as np

from .ik import IKError, WristCommand, wrist_step
from .keyframes import MotionExecutor, queue_from_dict
from .model import JointState, RobotModel, default_model, default_stand_positions
from .omnidrive import BaseTwist, OmnidriveController
from .protocol import (
    MessageDecoder,
    ProtocolError,
    canonical_json,
    chain_hash,
    encode_message,
    make_ack,
    make_error,
    make_hello,
    validate_command,
)
from .stepping import CommandRejected, StepCommand, SteppingController
from .world import FOOT_KEYS, Scenario, World, load_bundled_scenario

logger = logging.getLogger(__name__)

TELEMETRY_DIVISOR = 5  # 20 Hz at the 10 ms control period
SCAN_TICKS = 500  # panorama cadence: every 5 s of sim time
CLOUD_MAX_POINTS = 1200


class SessionError(RuntimeError):
    pass


@dataclass
class _PendingCommand:
    seq: int
    kind: str
    data: dict


class Session:
    """Deterministic core of the teleoperation service (no sockets here)."""

    def __init__(self, model: RobotModel, scenario: Scenario,
                 log_path: str | None = None, category=None,
                 include_clouds: bool = False):
        self.model = model
        self.scenario = scenario
        self.world = World(model, scenario)
        stand = default_stand_positions(model)
        self.executor = MotionExecutor(model, JointState(stand.copy()),
                                       scenario.control_period)
        self.stepping = SteppingController(model, self.world)
        self.drive_ctrl = OmnidriveController(model.wheel_radius)
        self.category = category
        self.include_clouds = include_clouds

        self.twist = BaseTwist()
        self.last_seq = -1
        self.inbox: list[_PendingCommand] = []
        self.active: dict[int, str] = {}  # seq -> kind, awaiting terminal ack
        self.last_ack: dict | None = None
        self.last_snapshot = None
        self._grasp_state: dict | None = None
        self._estop = False

        self._log_file = open(log_path, "w") if log_path else None
        self._chain = "genesis"
        self._log({"type": "header", "scenario": scenario.raw,
                   "seed": scenario.seed, "model": model.name,
                   "control_period": scenario.control_period, "version": 1})
        # settle onto the terrain before accepting operator input
        for _ in range(100):
            self.world.step(self.executor.targets)
        self.last_snapshot = self.world.step(self.executor.targets)

    # -- logging -----------------------------------------------------------------

    def _log(self, record: dict):
        record = dict(record)
        self._chain = chain_hash(self._chain, record)
        record["h"] = self._chain
        if self._log_file:
            self._log_file.write(json.dumps(record, separators=(",", ":")) + "\n")
            self._log_file.flush()

    # -- command intake ------------------------------------------------------------

    def submit(self, msg: dict) -> list[dict]:
        """Validate and enqueue one command; returns immediate replies."""
        try:
            validate_command(msg)
        except ProtocolError as e:
            return [make_error(str(e), seq=msg.get("seq"))]
        seq = msg["seq"]
        if seq <= self.last_seq:
            return [make_error(f"sequence id {seq} not increasing "
                               f"(last {self.last_seq})", seq=seq)]
        self.last_seq = seq
        kind = msg["kind"]
        data = msg.get("data", {})

        reply = self._admit(seq, kind, data)
        if reply is not None:
            return [reply]
        self.inbox.append(_PendingCommand(seq, kind, data))
        return [make_ack(seq, "accepted")]

    def _admit(self, seq: int, kind: str, data: dict) -> dict | None:
        """Mode-machine gate; returns a rejection ack or None to accept."""
        if kind == "drive":
            if self.stepping.active:
                return make_ack(seq, "rejected",
                                "mode conflict: stepping in progress")
        elif kind == "step":
            if not self.twist.is_zero:
                return make_ack(seq, "rejected",
                                "mode conflict: drive must be zeroed first")
            if self.stepping.active:
                return make_ack(seq, "rejected", "stepping command already active")
            try:
                StepCommand.from_dict(data).config(self.stepping.config)
            except ValueError as e:
                return make_ack(seq, "rejected", str(e))
        elif kind == "keyframe_queue":
            touches_legs = any(
                self.model.limbs[g].kind == "leg"
                for kf in data["keyframes"] for g in kf["targets"]
                if g in self.model.limbs)
            if touches_legs and (self.stepping.active or not self.twist.is_zero):
                return make_ack(seq, "rejected",
                                "mode conflict: legs owned by drive/step")
        elif kind == "grasp":
            if self.category is None:
                return make_ack(seq, "rejected", "no category model loaded")
            if self._grasp_state is not None:
                return make_ack(seq, "rejected", "grasp already in progress")
        elif kind == "mode_select":
            if self.stepping.active:
                return make_ack(seq, "rejected", "stepping in progress")
        return None

    # -- tick ---------------------------------------------------------------------

    def tick(self) -> list[dict]:
        """Advance one control period; returns outbound messages."""
        out: list[dict] = []
        for cmd in self.inbox:
            self._log({"type": "command", "tick": self.world.tick,
                       "msg": {"seq": cmd.seq, "kind": cmd.kind, "data": cmd.data}})
            out.extend(self._apply(cmd))
        self.inbox.clear()

        targets, finished = self.executor.tick(self.world.period)
        step_targets = self.stepping.tick(self.last_snapshot, self.world.period) \
            if self.stepping.active else None
        if step_targets is not None:
            targets = step_targets
            self.executor.targets = step_targets.copy()

        twist = None
        if self.world.mode == "drive" and not self.twist.is_zero and not self._estop:
            twist = self.twist
            feet = self.last_snapshot.foot_positions_base(self.model)[:, :2]
            wheel_cmd = self.drive_ctrl.update(twist, feet)
            for leg, steer, spin in zip(
                    ("front_left_leg", "front_right_leg",
                     "rear_left_leg", "rear_right_leg"),
                    wheel_cmd.steering, wheel_cmd.spin):
                limb = self.model.limbs[leg]
                si = self.model.joint_index[limb.steer_joint]
                wi = self.model.joint_index[limb.wheel_joint]
                targets[si] = steer
                targets[wi] += spin * self.world.period
            self.executor.targets = targets.copy()

        snap = self.world.step(targets, twist)
        self.last_snapshot = snap

        for seq in finished:
            if seq >= 0:  # negative ids are internal (grasp sub-queues)
                out.append(self._terminal(seq, "done"))
        out.extend(self._advance_grasp(finished))
        if not self.stepping.active:
            out.extend(self._finish_steps(snap))

        if self.world.tick % TELEMETRY_DIVISOR == 0:
            frame = self.telemetry_frame(snap)
            self._log(frame)
            out.append(frame)
        return out

    def run_ticks(self, n: int) -> list[dict]:
        out = []
        for _ in range(n):
            out.extend(self.tick())
        return out

    # -- command application ---------------------------------------------------------

    def _apply(self, cmd: _PendingCommand) -> list[dict]:
        out: list[dict] = []
        seq, kind, data = cmd.seq, cmd.kind, cmd.data
        try:
            if kind == "drive":
                self.twist = BaseTwist(data["vx"], data["vy"], data["vtheta"],
                                       data.get("scale", 1.0)).clamp()
                if self.world.mode == "step" and not self.stepping.active:
                    self.world.set_mode("drive")
                self._estop = False
                out.append(self._terminal(seq, "done"))
            elif kind == "step":
                sc = StepCommand.from_dict(data)
                try:
                    self.stepping.start(sc, self.last_snapshot)
                    self.active[seq] = "step"
                except CommandRejected as e:
                    detail = str(e)
                    if e.best_margin is not None:
                        detail += f" (best margin {e.best_margin:.3f} m)"
                    out.append(self._terminal(seq, "failed", detail))
            elif kind == "keyframe_queue":
                queue = queue_from_dict(data)
                try:
                    preempted = self.executor.submit_queue(queue, command_id=seq)
                except IKError as e:
                    out.append(self._terminal(seq, "failed", str(e)))
                    return out
                for p in preempted:
                    out.append(self._terminal(p, "preempted"))
                self.active[seq] = "keyframe_queue"
            elif kind == "wrist":
                wc = WristCommand.from_dict(data)
                try:
                    traj, _ = wrist_step(wc, JointState(self.executor.targets.copy()),
                                         self.model, dt=self.world.period * 10)
                except IKError as e:
                    out.append(self._terminal(seq, "failed", str(e)))
                    return out
                preempted = self.executor.submit_trajectory(traj, command_id=seq)
                for p in preempted:
                    out.append(self._terminal(p, "preempted"))
                self.active[seq] = "wrist"
            elif kind == "grasp":
                out.extend(self._start_grasp(seq, data))
            elif kind == "estop":
                dropped = self.executor.estop()
                for p in dropped:
                    out.append(self._terminal(p, "preempted"))
                if self.stepping.active:
                    self.stepping._freeze(self.last_snapshot, "estop",
                                          outcome="estop")
                if self._grasp_state is not None:
                    out.append(self._terminal(self._grasp_state["seq"], "preempted",
                                              "estop"))
                    self._grasp_state = None
                self.twist = BaseTwist()
                self._estop = True
                out.append(self._terminal(seq, "done"))
            elif kind == "mode_select":
                self.world.set_mode(data["mode"])
                out.append(self._terminal(seq, "done"))
            else:
                out.append(self._terminal(seq, "failed", f"unhandled kind {kind}"))
        except Exception as e:  # defensive: a command must never kill the session
            logger.exception("command %d failed", seq)
            out.append(self._terminal(seq, "failed", str(e)))
        return out

    def _terminal(self, seq: int, status: str, detail: str = "") -> dict:
        self.active.pop(seq, None)
        ack = make_ack(seq, status, detail)
        self.last_ack = ack
        return ack

    def _finish_steps(self, snap) -> list[dict]:
        out = []
        for seq, kind in list(self.active.items()):
            if kind != "step":
                continue
            record = self.stepping.history[-1] if self.stepping.history else None
            if record is None:
                continue
            status = "done" if record.outcome == "done" else \
                "preempted" if record.outcome == "estop" else "failed"
            out.append(self._terminal(seq, status, record.outcome))
        return out

    # -- grasp orchestration ----------------------------------------------------------

    def _start_grasp(self, seq: int, data: dict) -> list[dict]:
        from .grasp.pipeline import OracleConfig, plan_grasp

        oracle = OracleConfig(data.get("pose_noise_xy", 0.0),
                              data.get("pose_noise_yaw", 0.0))
        arm = data.get("arm", "left_arm")
        plan, stages = plan_grasp(self.world, self.category, data["object_id"],
                                  arm=arm, oracle=oracle, seed=self.scenario.seed)
        if plan is None:
            return [self._terminal(seq, "failed", stages[-1].detail)]
        part1 = plan.queue[:plan.grasp_keyframe_index + 1]
        part2 = plan.queue[plan.grasp_keyframe_index + 1:]
        self.executor.submit_queue(part1, command_id=-seq)  # internal id
        self._grasp_state = {"seq": seq, "plan": plan, "arm": arm,
                             "phase": 1, "part2": part2}
        self.active[seq] = "grasp"
        return []

    def _advance_grasp(self, finished: list[int]) -> list[dict]:
        gs = self._grasp_state
        if gs is None:
            return []
        seq = gs["seq"]
        if gs["phase"] == 1 and -seq in finished:
            from .model import forward_kinematics
            from .transforms import quat_angle_between

            tip = self.model.limb(gs["arm"]).tip
            reached = self.world.base_pose.compose(
                forward_kinematics(self.model, self.world.q, tip))
            plan = gs["plan"]
            gs["err_pos"] = float(np.linalg.norm(
                reached.position - plan.warped_grasp_world.position))
            gs["err_rot"] = float(quat_angle_between(
                reached.orientation, plan.warped_grasp_world.orientation))
            gs["phase"] = 2
            self.executor.submit_queue(gs["part2"], command_id=-seq, blend=0.0)
            return []
        if gs["phase"] == 2 and -seq in finished:
            ok = bool(gs["err_pos"] < 0.005 and gs["err_rot"] < np.radians(1.0))
            detail = (f"grasp error {gs['err_pos'] * 1000:.2f} mm / "
                      f"{np.degrees(gs['err_rot']):.3f} deg, "
                      f"clearance {gs['plan'].min_clearance:.3f} m")
            self._grasp_state = None
            return [self._terminal(seq, "done" if ok else "failed", detail)]
        return []

    # -- telemetry ----------------------------------------------------------------------

    def telemetry_frame(self, snap) -> dict:
        cloud = None
        if self.include_clouds and self.world.tick % SCAN_TICKS == 0:
            pts, _ = self.world.render(mode="spherical", n_azimuth=80,
                                       n_elevation=30)
            if len(pts) > CLOUD_MAX_POINTS:
                idx = np.linspace(0, len(pts) - 1, CLOUD_MAX_POINTS).astype(int)
                pts = pts[idx]
            cloud = [[float(v) for v in p] for p in pts]
        status = self.stepping.status()
        return {
            "type": "telemetry",
            "tick": snap.tick,
            "sim_time": snap.time,
            "mode": snap.mode,
            "base_pose": snap.base_pose.to_dict(),
            "joint_positions": [float(v) for v in snap.q.positions],
            "joint_torques": [float(v) for v in (snap.q.torques if snap.q.torques
                                                 is not None else
                                                 np.zeros(self.model.n_joints))],
            "feet": {
                k: {
                    "position": [float(v) for v in snap.feet[k].position],
                    "ground_height": float(snap.feet[k].ground_height),
                    "force": float(snap.feet[k].force),
                    "contact": bool(snap.feet[k].contact),
                    "anchored": bool(snap.feet[k].anchored),
                } for k in FOOT_KEYS
            },
            "com": [float(v) for v in snap.com_world],
            "stability_margin": None if snap.margin is None else float(snap.margin),
            "stepping": status.to_dict(),
            "trajectory": {
                "active": not self.executor.idle,
                "command_ids": [i for i in self.executor.active_command_ids()
                                if i >= 0],
            },
            "last_ack": self.last_ack,
            "cloud": cloud,
        }

    def finalize(self) -> dict:
        final = {"type": "final", "tick": self.world.tick,
                 "state": self.world.state_dict()}
        self._log(final)
        if self._log_file:
            self._log_file.close()
            self._log_file = None
        return final


# -- replay ---------------------------------------------------------------------------


@dataclass
class ReplayResult:
    ok: bool
    detail: str
    final_state: dict | None = None
    expected_state: dict | None = None


def verify_log_chain(records: list[dict]) -> tuple[bool, str]:
    chain = "genesis"
    for i, rec in enumerate(records):
        body = {k: v for k, v in rec.items() if k != "h"}
        chain = chain_hash(chain, body)
        if rec.get("h") != chain:
            return False, f"hash chain broken at record {i} (type {rec.get('type')})"
    return True, ""


def replay(log_path: str, model: RobotModel | None = None) -> ReplayResult:
    """Re-execute a session log; the final state must match bit-exactly."""
    records = []
    with open(log_path) as f:
        for line in f:
            if line.strip():
                records.append(json.loads(line))
    if not records or records[0].get("type") != "header":
        return ReplayResult(False, "log has no header record")
    ok, detail = verify_log_chain(records)
    if not ok:
        return ReplayResult(False, detail)
    header = records[0]
    final = next((r for r in records if r.get("type") == "final"), None)
    if final is None:
        return ReplayResult(False, "log has no final record")

    model = model or default_model()
    if model.name != header["model"]:
        return ReplayResult(False, f"model mismatch: {model.name} vs {header['model']}")
    scenario = Scenario.from_dict(header["scenario"])
    session = Session(model, scenario)
    commands = [r for r in records if r.get("type") == "command"]
    by_tick: dict[int, list[dict]] = {}
    for r in commands:
        by_tick.setdefault(r["tick"], []).append(r["msg"])
    end_tick = final["tick"]
    while session.world.tick < end_tick:
        for msg in by_tick.get(session.world.tick, []):
            session.submit({"type": "command", **msg})
        session.tick()
    got = session.world.state_dict()
    want = final["state"]
    if canonical_json(got) != canonical_json(want):
        return ReplayResult(False, "final state mismatch", got, want)
    return ReplayResult(True, "final state bit-identical", got, want)


# -- network server ----------------------------------------------------------------------


class _Client:
    def __init__(self, sock: socket.socket, role: str, maxlen: int):
        self.sock = sock
        self.role = role
        self.queue: Queue = Queue()
        self.maxlen = maxlen
        self.alive = True

    def push(self, msg: dict):
        # oldest-first drop for viewers; acks/errors always fit (small)
        while self.queue.qsize() >= self.maxlen:
            try:
                self.queue.get_nowait()
            except Empty:
                break
        self.queue.put(msg)


class TeleopServer:
    """Socket front end: one operator (read-write), any number of observers."""

    def __init__(self, session: Session, port: int, realtime: bool = True):
        self.session = session
        self.realtime = realtime
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._listener.bind(("127.0.0.1", port))
        except OSError as e:
            raise SessionError(f"cannot bind port {port}: {e}") from None
        self._listener.listen(8)
        self.port = self._listener.getsockname()[1]
        self._clients: list[_Client] = []
        self._operator: _Client | None = None
        self._inbox: Queue = Queue()
        self._stop = threading.Event()
        self._lock = threading.Lock()

    def start(self):
        threading.Thread(target=self._accept_loop, daemon=True).start()
        threading.Thread(target=self._sim_loop, daemon=True).start()

    def stop(self):
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        self.session.finalize()

    def run_forever(self):
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        self.stop()

    # -- threads ------------------------------------------------------------------

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            with self._lock:
                role = "operator" if self._operator is None else "observer"
                client = _Client(sock, role, maxlen=1024 if role == "operator" else 64)
                if role == "operator":
                    self._operator = client
                self._clients.append(client)
            client.push(make_hello(self.session.scenario.name,
                                   self.session.scenario.seed, role,
                                   self.session.scenario.control_period))
            threading.Thread(target=self._recv_loop, args=(client,),
                             daemon=True).start()
            threading.Thread(target=self._send_loop, args=(client,),
                             daemon=True).start()

    def _recv_loop(self, client: _Client):
        decoder = MessageDecoder()
        while not self._stop.is_set():
            try:
                data = client.sock.recv(65536)
            except OSError:
                data = b""
            if not data:
                self._drop(client)
                return
            try:
                for msg in decoder.feed(data):
                    if client.role != "operator":
                        client.push(make_error("read-only connection"))
                        continue
                    self._inbox.put(msg)
            except ProtocolError as e:
                client.push(make_error(str(e)))

    def _send_loop(self, client: _Client):
        while not self._stop.is_set() and client.alive:
            try:
                msg = client.queue.get(timeout=0.2)
            except Empty:
                continue
            try:
                client.sock.sendall(encode_message(msg))
            except OSError:
                self._drop(client)
                return

    def _drop(self, client: _Client):
        with self._lock:
            client.alive = False
            if client in self._clients:
                self._clients.remove(client)
            if client is self._operator:
                self._operator = None
                # operator gone: stop driving; a live stepping command finishes
                self._inbox.put({"type": "command",
                                 "seq": self.session.last_seq + 1,
                                 "kind": "drive",
                                 "data": {"vx": 0.0, "vy": 0.0, "vtheta": 0.0}})
        try:
            client.sock.close()
        except OSError:
            pass

    def _sim_loop(self):
        period = self.session.scenario.control_period
        next_t = time.monotonic()
        while not self._stop.is_set():
            while True:
                try:
                    msg = self._inbox.get_nowait()
                except Empty:
                    break
                replies = self.session.submit(msg)
                self._broadcast(replies, operator_only=True)
            out = self.session.tick()
            self._broadcast(out)
            if self.realtime:
                next_t += period
                delay = next_t - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_t = time.monotonic()

    def _broadcast(self, msgs: list[dict], operator_only: bool = False):
        if not msgs:
            return
        with self._lock:
            clients = list(self._clients)
        for msg in msgs:
            for c in clients:
                if operator_only and c.role != "operator":
                    continue
                if msg["type"] in ("ack", "error") and c.role != "operator":
                    continue
                c.push(msg)


def serve(scenario_name: str, port: int, seed: int | None = None,
          log_path: str | None = None, category=None,
          realtime: bool = True) -> TeleopServer:
    model = default_model()
    scenario = load_bundled_scenario(scenario_name, seed=seed) \
        if isinstance(scenario_name, str) and not scenario_name.endswith(".json") \
        else Scenario.load(scenario_name)
    session = Session(model, scenario, log_path=log_path, category=category)
    server = TeleopServer(session, port, realtime=realtime)
    return server
