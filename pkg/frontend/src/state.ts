/**
 * Console state: everything the UI renders originates from received
 * telemetry and acks. There is no optimistic mutation anywhere: sending a
 * command only records that it is pending, never changes displayed robot
 * state.
 */

import {
  AckMessage,
  CommandMessage,
  ErrorMessage,
  HelloMessage,
  ServerMessage,
  TelemetryFrame,
} from "./protocol.js";

export interface PendingCommand {
  seq: number;
  kind: string;
  sentAt: number;
  accepted: boolean;
}

export interface AckRecord {
  seq: number;
  kind: string;
  status: string;
  detail: string;
  latencyMs: number | null;
}

export type ConnectionStatus = "disconnected" | "connecting" | "connected";

export class ConsoleState {
  connection: ConnectionStatus = "disconnected";
  hello: HelloMessage | null = null;
  frame: TelemetryFrame | null = null;
  frameCount = 0;
  pending = new Map<number, PendingCommand>();
  ackLog: AckRecord[] = [];
  errors: ErrorMessage[] = [];
  lastLatencyMs: number | null = null;

  /** Commands that own the legs while active. */
  get steppingBusy(): boolean {
    if (this.frame === null) return false;
    if (this.frame.stepping.phase !== "IDLE") return true;
    for (const p of this.pending.values()) {
      if (p.kind === "step") return true;
    }
    return false;
  }

  get driving(): boolean {
    return this.frame !== null && this.frame.mode === "drive" &&
      this.frame.trajectory.active;
  }

  /** Step buttons lock while a stepping command is pending or running. */
  stepButtonsEnabled(): boolean {
    return this.connection === "connected" && this.frame !== null &&
      !this.steppingBusy;
  }

  commandsEnabled(): boolean {
    return this.connection === "connected" && this.hello?.role === "operator";
  }

  recordSent(msg: CommandMessage, now: number): void {
    this.pending.set(msg.seq, {
      seq: msg.seq,
      kind: msg.kind,
      sentAt: now,
      accepted: false,
    });
  }

  apply(msg: ServerMessage, now: number): void {
    switch (msg.type) {
      case "hello":
        this.hello = msg;
        this.connection = "connected";
        break;
      case "telemetry":
        this.frame = msg;
        this.frameCount += 1;
        break;
      case "ack": {
        const pending = this.pending.get(msg.seq);
        if (pending && !pending.accepted && msg.status === "accepted") {
          pending.accepted = true;
          this.lastLatencyMs = now - pending.sentAt;
        }
        if (msg.status !== "accepted") {
          // terminal (done/failed/preempted) or rejection: command resolved
          this.ackLog.push({
            seq: msg.seq,
            kind: pending?.kind ?? "?",
            status: msg.status,
            detail: msg.detail ?? "",
            latencyMs: pending ? now - pending.sentAt : null,
          });
          this.pending.delete(msg.seq);
        }
        break;
      }
      case "error":
        this.errors.push(msg);
        if (msg.seq !== undefined) this.pending.delete(msg.seq);
        break;
    }
  }

  disconnected(): void {
    this.connection = "disconnected";
    this.pending.clear();
  }
}
