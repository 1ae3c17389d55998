"""Scripted operator command sequences for the scenario re-enactments.

These drive a Session exactly like a human operator would: submit a
command, watch telemetry, wait for the terminal ack, move on. The margin
trace of every tick is collected so the acceptance suite can assert static
stability over entire traversals.
"""

import numpy as np

from centaursim.protocol import make_command


class ScriptRunner:
    def __init__(self, session):
        self.session = session
        self.seq = -1
        self.margins = []
        self.terminal = {}

    def _next_seq(self):
        self.seq += 1
        return self.seq

    def _collect(self, msgs):
        for m in msgs:
            if m.get("type") == "ack" and m.get("status") in (
                    "done", "failed", "preempted"):
                self.terminal[m["seq"]] = m
        snap = self.session.last_snapshot
        if snap.margin is not None:
            self.margins.append(snap.margin)

    def ticks(self, n):
        for _ in range(n):
            self._collect(self.session.tick())

    def command(self, kind, data, max_ticks=60000):
        """Submit and run until the terminal ack; returns the ack."""
        seq = self._next_seq()
        replies = self.session.submit(make_command(seq, kind, data))
        if replies[0].get("status") == "rejected" or replies[0]["type"] == "error":
            raise AssertionError(f"command rejected: {replies[0]}")
        for _ in range(max_ticks):
            self._collect(self.session.tick())
            if seq in self.terminal:
                return self.terminal[seq]
        raise AssertionError(f"no terminal ack for {kind} (seq {seq})")

    def drive(self, vx, seconds, vy=0.0, vtheta=0.0):
        ack = self.command("drive", {"vx": vx, "vy": vy, "vtheta": vtheta})
        assert ack["status"] == "done"
        self.ticks(int(round(seconds / self.session.world.period)))
        ack = self.command("drive", {"vx": 0.0, "vy": 0.0, "vtheta": 0.0})
        assert ack["status"] == "done"
        self.ticks(60)  # settle

    def step_foot(self, foot, length, **overrides):
        ack = self.command("step", {"kind": "step_foot", "foot": foot,
                                    "length": length,
                                    "overrides": overrides})
        assert ack["status"] == "done", f"step {foot} failed: {ack}"

    def shift_base(self, length, **overrides):
        ack = self.command("step", {"kind": "shift_base", "length": length,
                                    "overrides": overrides})
        assert ack["status"] == "done", f"shift failed: {ack}"

    def crouch(self, dz):
        """Lower the base by bending all legs (Cartesian leg keyframes)."""
        session = self.session
        model = session.model
        snap = session.last_snapshot
        inv = snap.base_pose.inverse()
        targets = {}
        for foot, limb in (("fl", "front_left_leg"), ("fr", "front_right_leg"),
                           ("rl", "rear_left_leg"), ("rr", "rear_right_leg")):
            p = inv.transform_point(snap.feet[foot].position)
            targets[limb] = {
                "pose": {"position": [float(p[0]), float(p[1]), float(p[2] + dz)],
                         "orientation": [0.0, 0.0, 0.0, 1.0]},
                "mask": [True, True, True, False, False, False],
            }
        kf = {"targets": targets, "vel_scale": 0.3}
        ack = self.command("keyframe_queue", {"keyframes": [kf]})
        assert ack["status"] == "done", f"crouch failed: {ack}"
        self.ticks(80)


def traverse_stepfield(runner, cycles=12, step=0.20, depth_limit=0.38):
    """Cross the block field: per cycle step both fronts, shift, both rears."""
    ov = {"lower_depth_limit": depth_limit, "vel_scale": 0.5,
          "lower_speed": 0.08, "max_step": 0.30}
    runner.drive(0.5, 0.6)  # approach the field edge
    runner.crouch(0.07)  # more horizontal leg reach over the blocks
    for _ in range(cycles):
        runner.step_foot("fl", step, **ov)
        runner.step_foot("fr", step, **ov)
        runner.shift_base(step, vel_scale=0.5)
        runner.step_foot("rl", step, **ov)
        runner.step_foot("rr", step, **ov)


def cross_gap(runner, gap_x0=1.20, gap_x1=1.50):
    """Step both front feet across, carry the base over, step the rears.

    With the wheelbase spanning the gap the stance is maximally stretched;
    the rear steps run with a reduced (operator-chosen) margin requirement.
    """
    long = (gap_x1 - gap_x0) + 0.12
    ov = {"max_step": 0.55, "lower_depth_limit": 0.30}
    ov_rear = {**ov, "margin_min": 0.03}
    runner.drive(0.5, 1.50)  # front feet ~5 cm before the near edge
    runner.crouch(0.14)  # horizontal leg reach for the long steps
    runner.step_foot("fl", long, **ov)
    runner.step_foot("fr", long, **ov)
    runner.shift_base(0.20)
    runner.drive(0.3, 2.63)  # carry the base over; rears stop at the edge
    runner.step_foot("rl", long, **ov_rear)
    runner.step_foot("rr", long, **ov_rear)
    runner.shift_base(0.20)
    runner.drive(0.4, 1.0)  # clear of the gap


def climb_ramp(runner):
    runner.drive(0.6, 6.5)
