"""Wire protocol: length-delimited JSON messages over one bidirectional stream.

Every frame is a 4-byte big-endian length followed by a UTF-8 JSON object.
Message shapes are pinned by the bundled JSON schema
(``centaursim/data/protocol.schema.json``); the operator console validates
against the same file. Command messages carry strictly increasing sequence
ids per session; unknown kinds are answered with an error reply, never
dropped.
"""

from __future__ import annotations

import hashlib
import json
import struct
from importlib import resources

import jsonschema

PROTOCOL_VERSION = 1
MAX_MESSAGE_BYTES = 8 * 1024 * 1024

COMMAND_KINDS = ("drive", "step", "wrist", "keyframe_queue", "grasp",
                 "estop", "mode_select")
TERMINAL_STATUSES = ("done", "failed", "preempted")


class ProtocolError(ValueError):
    pass


def encode_message(msg: dict) -> bytes:
    payload = json.dumps(msg, separators=(",", ":")).encode()
    if len(payload) > MAX_MESSAGE_BYTES:
        raise ProtocolError(f"message too large ({len(payload)} bytes)")
    return struct.pack(">I", len(payload)) + payload


class MessageDecoder:
    """Incremental frame decoder for a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[dict]:
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < 4:
                return out
            (length,) = struct.unpack(">I", self._buf[:4])
            if length > MAX_MESSAGE_BYTES:
                raise ProtocolError(f"frame length {length} exceeds limit")
            if len(self._buf) < 4 + length:
                return out
            payload = bytes(self._buf[4:4 + length])
            del self._buf[:4 + length]
            try:
                out.append(json.loads(payload))
            except json.JSONDecodeError as e:
                raise ProtocolError(f"malformed JSON frame: {e}") from None


_schema_cache = None


def load_schema() -> dict:
    global _schema_cache
    if _schema_cache is None:
        ref = resources.files("centaursim.data").joinpath("protocol.schema.json")
        _schema_cache = json.loads(ref.read_text())
    return _schema_cache


def _validator_for(name: str):
    schema = load_schema()
    sub = {"$ref": f"#/$defs/{name}", "$defs": schema["$defs"]}
    return jsonschema.Draft202012Validator(sub)


def validate_message(msg: dict):
    """Validate any protocol message against the bundled schema."""
    try:
        jsonschema.validate(msg, load_schema(),
                            cls=jsonschema.Draft202012Validator)
    except jsonschema.ValidationError as e:
        raise ProtocolError(f"schema violation: {e.message}") from None


def validate_command(msg: dict):
    if msg.get("type") != "command":
        raise ProtocolError("not a command message")
    try:
        _validator_for("command").validate(msg)
    except jsonschema.ValidationError as e:
        raise ProtocolError(f"schema violation: {e.message}") from None


# -- construction helpers --------------------------------------------------------


def make_command(seq: int, kind: str, data: dict, issued_at: float = 0.0) -> dict:
    return {"type": "command", "seq": seq, "kind": kind, "data": data,
            "issued_at": issued_at}


def make_ack(seq: int, status: str, detail: str = "") -> dict:
    return {"type": "ack", "seq": seq, "status": status, "detail": detail}


def make_error(detail: str, seq: int | None = None) -> dict:
    msg = {"type": "error", "detail": detail}
    if seq is not None:
        msg["seq"] = seq
    return msg


def make_hello(scenario: str, seed: int, role: str, control_period: float) -> dict:
    return {"type": "hello", "version": PROTOCOL_VERSION, "scenario": scenario,
            "seed": seed, "role": role, "control_period": control_period}


# -- canonical hashing (log integrity / replay) -----------------------------------


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def chain_hash(prev: str, obj) -> str:
    h = hashlib.sha256()
    h.update(prev.encode())
    h.update(canonical_json(obj).encode())
    return h.hexdigest()
