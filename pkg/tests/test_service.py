import json
import socket
import time

import numpy as np
import pytest

from centaursim.model import default_model
from centaursim.protocol import (
    MessageDecoder,
    encode_message,
    load_schema,
    make_command,
    validate_message,
)
from centaursim.service import ReplayResult, Session, TeleopServer, replay
from centaursim.world import Scenario, load_bundled_scenario

import jsonschema


@pytest.fixture
def session(model):
    return Session(model, load_bundled_scenario("flat"))


def drain_terminal(session, seq, max_ticks=20000):
    """Run until the command with this seq gets its terminal ack."""
    for _ in range(max_ticks):
        for msg in session.tick():
            if msg.get("type") == "ack" and msg.get("seq") == seq and \
                    msg["status"] in ("done", "failed", "preempted"):
                return msg
    raise AssertionError(f"no terminal ack for seq {seq}")


class TestModeMachine:
    def test_estop_halts_within_one_tick(self, session, model):
        replies = session.submit(make_command(0, "drive",
                                              {"vx": 0.5, "vy": 0, "vtheta": 0}))
        assert replies[0]["status"] == "accepted"
        session.run_ticks(50)
        x_before = None
        replies = session.submit(make_command(1, "estop", {}))
        assert replies[0]["status"] == "accepted"
        out = session.tick()  # estop applied here
        x_stop = session.world.base_pose.position[0]
        assert any(m.get("seq") == 1 and m["status"] == "done" for m in out
                   if m["type"] == "ack")
        session.run_ticks(30)
        assert abs(session.world.base_pose.position[0] - x_stop) < 1e-9

    def test_step_rejected_while_driving(self, session):
        session.submit(make_command(0, "drive", {"vx": 0.4, "vy": 0, "vtheta": 0}))
        session.run_ticks(5)
        replies = session.submit(make_command(
            1, "step", {"kind": "step_foot", "foot": "fl", "length": 0.1}))
        assert replies[0]["status"] == "rejected"
        assert "mode conflict" in replies[0]["detail"]

    def test_step_accepted_after_zeroing_drive(self, session):
        session.submit(make_command(0, "drive", {"vx": 0.4, "vy": 0, "vtheta": 0}))
        session.run_ticks(20)
        session.submit(make_command(1, "drive", {"vx": 0, "vy": 0, "vtheta": 0}))
        session.run_ticks(60)  # let the base settle
        replies = session.submit(make_command(
            2, "step", {"kind": "step_foot", "foot": "fl", "length": 0.08}))
        assert replies[0]["status"] == "accepted"
        ack = drain_terminal(session, 2)
        assert ack["status"] == "done"
        assert session.stepping.history[-1].outcome == "done"

    def test_leg_keyframes_rejected_while_stepping(self, session, model):
        session.submit(make_command(
            0, "step", {"kind": "step_foot", "foot": "rr", "length": 0.06}))
        session.run_ticks(3)
        idx = [model.joint_index[j] for j in model.limb("front_left_leg").joints]
        kf = {"targets": {"front_left_leg":
                          {"joint_positions": list(session.executor.targets[idx])}}}
        replies = session.submit(make_command(1, "keyframe_queue", {"keyframes": [kf]}))
        assert replies[0]["status"] == "rejected"
        # arm keyframes stay allowed: arms are independent
        idx_a = [model.joint_index[j] for j in model.limb("left_arm").joints]
        kfa = {"targets": {"left_arm":
                           {"joint_positions": list(session.executor.targets[idx_a])}}}
        replies = session.submit(make_command(2, "keyframe_queue", {"keyframes": [kfa]}))
        assert replies[0]["status"] == "accepted"

    def test_sequence_ids_strictly_increasing(self, session):
        session.submit(make_command(5, "drive", {"vx": 0, "vy": 0, "vtheta": 0}))
        replies = session.submit(make_command(5, "drive",
                                              {"vx": 0, "vy": 0, "vtheta": 0}))
        assert replies[0]["type"] == "error"
        assert "sequence" in replies[0]["detail"]

    def test_unknown_kind_rejected_not_dropped(self, session):
        replies = session.submit({"type": "command", "seq": 0, "kind": "teleport",
                                  "data": {}})
        assert replies[0]["type"] == "error"

    def test_malformed_command_error(self, session):
        replies = session.submit(make_command(0, "drive", {"vx": "fast"}))
        assert replies[0]["type"] == "error"


class TestAckTotality:
    def test_every_accepted_command_exactly_one_terminal(self, session, model):
        terminal = {}
        submitted = []

        def submit(seq, kind, data):
            r = session.submit(make_command(seq, kind, data))
            if r[0].get("status") == "accepted":
                submitted.append(seq)

        submit(0, "drive", {"vx": 0.3, "vy": 0, "vtheta": 0.0})
        submit(1, "drive", {"vx": 0.0, "vy": 0, "vtheta": 0.0})
        idx = [model.joint_index[j] for j in model.limb("left_arm").joints]
        tgt = list(session.executor.targets[idx] + 0.2)
        submit(2, "keyframe_queue", {"keyframes": [{"targets": {"left_arm": {"joint_positions": tgt}}}]})
        # preempt it
        tgt2 = list(session.executor.targets[idx] - 0.1)
        submit(3, "keyframe_queue", {"keyframes": [{"targets": {"left_arm": {"joint_positions": tgt2}}}]})
        submit(4, "estop", {})
        for _ in range(3000):
            for msg in session.tick():
                if msg.get("type") == "ack" and msg["status"] in (
                        "done", "failed", "preempted"):
                    assert msg["seq"] not in terminal, "duplicate terminal ack"
                    terminal[msg["seq"]] = msg["status"]
            if set(terminal) >= set(submitted):
                break
        assert set(terminal) == set(submitted)
        assert terminal[2] == "preempted"  # killed by 3 or the estop
        assert terminal[4] == "done"


class TestTelemetry:
    def test_cadence_and_schema(self, session):
        frames = []
        for _ in range(40):
            for msg in session.tick():
                if msg["type"] == "telemetry":
                    frames.append(msg)
        assert len(frames) == 8
        times = [f["sim_time"] for f in frames]
        spacing = np.diff(times)
        np.testing.assert_allclose(spacing, 0.05, atol=1e-12)
        schema = load_schema()
        for f in frames:
            jsonschema.validate(f, schema, cls=jsonschema.Draft202012Validator)

    def test_every_field_present(self, session):
        frame = session.telemetry_frame(session.last_snapshot)
        for key in ("tick", "sim_time", "mode", "base_pose", "joint_positions",
                    "joint_torques", "feet", "com", "stability_margin",
                    "stepping", "trajectory", "last_ack", "cloud"):
            assert key in frame


class TestReplay:
    def test_empty_session_replays(self, model, tmp_path):
        log = tmp_path / "empty.jsonl"
        s = Session(model, load_bundled_scenario("flat"), log_path=str(log))
        s.run_ticks(40)
        s.finalize()
        result = replay(str(log), model)
        assert result.ok, result.detail

    def test_command_session_bit_exact(self, model, tmp_path):
        log = tmp_path / "drive.jsonl"
        s = Session(model, load_bundled_scenario("stepfield"), log_path=str(log))
        s.submit(make_command(0, "drive", {"vx": 0.4, "vy": 0.1, "vtheta": 0.2}))
        s.run_ticks(120)
        s.submit(make_command(1, "drive", {"vx": 0.0, "vy": 0.0, "vtheta": 0.0}))
        s.run_ticks(80)
        s.submit(make_command(2, "step", {"kind": "step_foot", "foot": "fl",
                                          "length": 0.08}))
        drain_terminal(s, 2)
        s.run_ticks(20)
        s.finalize()
        result = replay(str(log), model)
        assert result.ok, result.detail

    def test_tampered_log_detected(self, model, tmp_path):
        log = tmp_path / "t.jsonl"
        s = Session(model, load_bundled_scenario("flat"), log_path=str(log))
        s.submit(make_command(0, "drive", {"vx": 0.2, "vy": 0, "vtheta": 0}))
        s.run_ticks(30)
        s.finalize()
        lines = log.read_text().strip().split("\n")
        rec = json.loads(lines[2])
        if "tick" in rec:
            rec["tick"] += 1
        else:
            rec["sim_time"] = (rec.get("sim_time") or 0) + 1
        lines[2] = json.dumps(rec, separators=(",", ":"))
        log.write_text("\n".join(lines) + "\n")
        result = replay(str(log), model)
        assert not result.ok
        assert "chain" in result.detail


class TestServer:
    def recv_messages(self, sock, decoder, want, timeout=10.0):
        got = []
        sock.settimeout(timeout)
        deadline = time.time() + timeout
        while time.time() < deadline:
            try:
                data = sock.recv(65536)
            except socket.timeout:
                break
            got.extend(decoder.feed(data))
            if any(want(m) for m in got):
                break
        return got

    def test_operator_round_trip_and_observer(self, model):
        session = Session(model, load_bundled_scenario("flat"))
        server = TeleopServer(session, port=0, realtime=True)
        server.start()
        try:
            op = socket.create_connection(("127.0.0.1", server.port), timeout=5)
            dec_op = MessageDecoder()
            msgs = self.recv_messages(op, dec_op, lambda m: m["type"] == "hello")
            hello = next(m for m in msgs if m["type"] == "hello")
            assert hello["role"] == "operator"
            validate_message(hello)

            ob = socket.create_connection(("127.0.0.1", server.port), timeout=5)
            dec_ob = MessageDecoder()
            msgs = self.recv_messages(ob, dec_ob, lambda m: m["type"] == "hello")
            assert next(m for m in msgs if m["type"] == "hello")["role"] == "observer"

            # observer commands get an error, never silent drop
            ob.sendall(encode_message(make_command(0, "estop", {})))
            msgs = self.recv_messages(ob, dec_ob, lambda m: m["type"] == "error")
            assert any("read-only" in m.get("detail", "") for m in msgs
                       if m["type"] == "error")

            # operator estop: accepted then done
            op.sendall(encode_message(make_command(0, "estop", {})))
            msgs = self.recv_messages(
                op, dec_op,
                lambda m: m["type"] == "ack" and m["status"] == "done")
            statuses = [m["status"] for m in msgs if m["type"] == "ack"
                        and m["seq"] == 0]
            assert "accepted" in statuses
            assert "done" in statuses

            # telemetry flows to both
            msgs = self.recv_messages(ob, dec_ob, lambda m: m["type"] == "telemetry")
            assert any(m["type"] == "telemetry" for m in msgs)
            op.close()
            ob.close()
        finally:
            server.stop()

    def test_disconnect_mid_step_completes_lower(self, model):
        """Losing the operator never drops a foot mid-air."""
        session = Session(model, load_bundled_scenario("flat"))
        server = TeleopServer(session, port=0, realtime=True)
        server.start()
        try:
            op = socket.create_connection(("127.0.0.1", server.port), timeout=5)
            dec = MessageDecoder()
            self.recv_messages(op, dec, lambda m: m["type"] == "hello")
            op.sendall(encode_message(make_command(
                0, "step", {"kind": "step_foot", "foot": "fl", "length": 0.08})))
            self.recv_messages(op, dec,
                               lambda m: m["type"] == "ack" and
                               m["status"] == "accepted")
            # wait for the lift to begin, then vanish
            deadline = time.time() + 20
            while time.time() < deadline:
                if session.stepping.phase.value in ("LIFT", "EXTEND", "LOWER"):
                    break
                time.sleep(0.01)
            op.close()
            deadline = time.time() + 60
            while time.time() < deadline and session.stepping.active:
                time.sleep(0.05)
            assert not session.stepping.active
            assert session.stepping.history[-1].outcome == "done"
            snap = session.last_snapshot
            assert snap.feet["fl"].contact  # the foot was set down, not dropped
        finally:
            server.stop()
