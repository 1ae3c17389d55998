/**
 * Wire protocol: length-delimited JSON frames over a byte stream.
 * Mirrors the service side; the message shapes are pinned by the shared
 * schema file (src/centaursim/data/protocol.schema.json in this repo).
 */

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number];

export interface Pose {
  position: Vec3;
  orientation: Quat;
}

export type CommandKind =
  | "drive" | "step" | "wrist" | "keyframe_queue" | "grasp" | "estop"
  | "mode_select";

export interface CommandMessage {
  type: "command";
  seq: number;
  kind: CommandKind;
  data: Record<string, unknown>;
  issued_at?: number;
}

export type AckStatus = "accepted" | "done" | "failed" | "preempted" | "rejected";

export interface AckMessage {
  type: "ack";
  seq: number;
  status: AckStatus;
  detail?: string;
}

export interface ErrorMessage {
  type: "error";
  detail: string;
  seq?: number;
}

export interface HelloMessage {
  type: "hello";
  version: number;
  scenario: string;
  seed: number;
  role: "operator" | "observer";
  control_period: number;
}

export interface FootState {
  position: Vec3;
  ground_height: number;
  force: number;
  contact: boolean;
  anchored: boolean;
}

export type SteppingPhase =
  | "IDLE" | "SHIFT_BALANCE" | "LIFT" | "EXTEND" | "LOWER" | "RESTORE";

export interface TelemetryFrame {
  type: "telemetry";
  tick: number;
  sim_time: number;
  mode: "drive" | "step";
  base_pose: Pose;
  joint_positions: number[];
  joint_torques: number[];
  feet: Record<"fl" | "fr" | "rl" | "rr", FootState>;
  com: Vec3;
  stability_margin: number | null;
  stepping: {
    phase: SteppingPhase;
    foot: string | null;
    progress: number;
    history: Record<string, unknown>[];
  };
  trajectory: { active: boolean; command_ids: number[] };
  last_ack: AckMessage | null;
  cloud: Vec3[] | null;
}

export type ServerMessage =
  | AckMessage | ErrorMessage | HelloMessage | TelemetryFrame;

export function encodeMessage(msg: object): Uint8Array {
  const payload = new TextEncoder().encode(JSON.stringify(msg));
  const out = new Uint8Array(4 + payload.length);
  new DataView(out.buffer).setUint32(0, payload.length, false);
  out.set(payload, 4);
  return out;
}

/** Incremental decoder for the 4-byte-length framing. */
export class MessageDecoder {
  private buffer = new Uint8Array(0);

  feed(data: Uint8Array): ServerMessage[] {
    const joined = new Uint8Array(this.buffer.length + data.length);
    joined.set(this.buffer, 0);
    joined.set(data, this.buffer.length);
    this.buffer = joined;
    const out: ServerMessage[] = [];
    for (;;) {
      if (this.buffer.length < 4) return out;
      const length = new DataView(
        this.buffer.buffer, this.buffer.byteOffset).getUint32(0, false);
      if (this.buffer.length < 4 + length) return out;
      const payload = this.buffer.slice(4, 4 + length);
      this.buffer = this.buffer.slice(4 + length);
      out.push(JSON.parse(new TextDecoder().decode(payload)) as ServerMessage);
    }
  }
}
