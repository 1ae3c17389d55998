/**
 * Command builders. Every emitted message goes through these, which is what
 * the schema-conformance tests pin down.
 */

import { CommandMessage } from "./protocol.js";

export interface DriveInput {
  vx: number;
  vy: number;
  vtheta: number;
  scale?: number;
}

export interface WristInput {
  endEffector: string;
  frame?: "base" | "end_effector" | "custom";
  translationMask: [boolean, boolean, boolean];
  rotationMask: [boolean, boolean, boolean];
  deltaTranslation: [number, number, number];
  deltaRotation: [number, number, number];
  speedScale?: number;
}

export class CommandFactory {
  private seq = -1;

  nextSeq(): number {
    this.seq += 1;
    return this.seq;
  }

  get lastSeq(): number {
    return this.seq;
  }

  private wrap(kind: CommandMessage["kind"],
               data: Record<string, unknown>): CommandMessage {
    return {
      type: "command",
      seq: this.nextSeq(),
      kind,
      data,
      issued_at: Date.now() / 1000,
    };
  }

  drive(input: DriveInput): CommandMessage {
    const clamp = (v: number, lim: number) => Math.max(-lim, Math.min(lim, v));
    return this.wrap("drive", {
      vx: clamp(input.vx, 1.0),
      vy: clamp(input.vy, 1.0),
      vtheta: clamp(input.vtheta, 1.0),
      scale: Math.min(1.0, Math.max(0.0, input.scale ?? 1.0)),
    });
  }

  stepFoot(foot: "fl" | "fr" | "rl" | "rr", length: number,
           overrides: Record<string, number> = {}): CommandMessage {
    return this.wrap("step", { kind: "step_foot", foot, length, overrides });
  }

  driveFoot(foot: "fl" | "fr" | "rl" | "rr", length: number): CommandMessage {
    return this.wrap("step", { kind: "drive_foot", foot, length, overrides: {} });
  }

  shiftBase(length: number): CommandMessage {
    return this.wrap("step", { kind: "shift_base", foot: null, length, overrides: {} });
  }

  wrist(input: WristInput): CommandMessage {
    return this.wrap("wrist", {
      end_effector: input.endEffector,
      frame: input.frame ?? "base",
      translation_mask: input.translationMask,
      rotation_mask: input.rotationMask,
      delta_translation: input.deltaTranslation,
      delta_rotation: input.deltaRotation,
      speed_scale: Math.min(1.0, Math.max(1e-6, input.speedScale ?? 1.0)),
    });
  }

  keyframeQueue(keyframes: Record<string, unknown>[]): CommandMessage {
    return this.wrap("keyframe_queue", { keyframes });
  }

  grasp(category: string, objectId: string, arm?: string): CommandMessage {
    const data: Record<string, unknown> = { category, object_id: objectId };
    if (arm) data.arm = arm;
    return this.wrap("grasp", data);
  }

  estop(): CommandMessage {
    return this.wrap("estop", {});
  }

  modeSelect(mode: "drive" | "step"): CommandMessage {
    return this.wrap("mode_select", { mode });
  }
}
