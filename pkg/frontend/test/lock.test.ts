/**
 * Stepping-button lock/unlock, driven by a mocked StepPhase stream and acks.
 */

import { describe, expect, it } from "vitest";

import { ConsoleApp } from "../src/console.js";
import { MockTransport } from "../src/transport.js";
import { AckMessage, HelloMessage, TelemetryFrame } from "../src/protocol.js";

function hello(): HelloMessage {
  return { type: "hello", version: 1, scenario: "flat", seed: 0,
           role: "operator", control_period: 0.01 };
}

function frame(phase: TelemetryFrame["stepping"]["phase"],
               tick = 0): TelemetryFrame {
  const foot = { position: [0.4, 0.3, 0.08] as [number, number, number],
                 ground_height: 0, force: 220, contact: true, anchored: false };
  return {
    type: "telemetry",
    tick,
    sim_time: tick * 0.01,
    mode: "step",
    base_pose: { position: [0, 0, 0.82], orientation: [0, 0, 0, 1] },
    joint_positions: [], joint_torques: [],
    feet: { fl: foot, fr: foot, rl: foot, rr: foot },
    com: [0, 0, 0.7],
    stability_margin: 0.2,
    stepping: { phase, foot: phase === "IDLE" ? null : "fl",
                progress: 0.5, history: [] },
    trajectory: { active: false, command_ids: [] },
    last_ack: null,
    cloud: null,
  };
}

function setup(): { app: ConsoleApp; mock: MockTransport } {
  const app = new ConsoleApp();
  const mock = new MockTransport();
  app.attach(mock);
  mock.receive(hello());
  mock.receive(frame("IDLE"));
  return { app, mock };
}

describe("stepping button lock", () => {
  it("enabled when idle and connected", () => {
    const { app } = setup();
    expect(app.state.stepButtonsEnabled()).toBe(true);
  });

  it("locks immediately after a step command until the terminal ack", () => {
    const { app, mock } = setup();
    const cmd = app.stepFoot("fl", 0.12);
    expect(app.state.stepButtonsEnabled()).toBe(false);       // pending
    expect(() => app.stepFoot("fr", 0.1)).toThrow();

    mock.receive({ type: "ack", seq: cmd.seq, status: "accepted" } as AckMessage);
    expect(app.state.stepButtonsEnabled()).toBe(false);       // still running

    // the phase stream shows the motion going through its states
    for (const phase of ["SHIFT_BALANCE", "LIFT", "EXTEND", "LOWER",
                         "RESTORE"] as const) {
      mock.receive(frame(phase));
      expect(app.state.stepButtonsEnabled()).toBe(false);
    }

    mock.receive(frame("IDLE"));
    mock.receive({ type: "ack", seq: cmd.seq, status: "done",
                   detail: "" } as AckMessage);
    expect(app.state.stepButtonsEnabled()).toBe(true);        // unlocked
  });

  it("phase stream alone locks the buttons (externally triggered motion)", () => {
    const { app, mock } = setup();
    mock.receive(frame("LOWER"));
    expect(app.state.stepButtonsEnabled()).toBe(false);
    mock.receive(frame("IDLE"));
    expect(app.state.stepButtonsEnabled()).toBe(true);
  });

  it("rejection unlocks and is recorded against the command", () => {
    const { app, mock } = setup();
    const cmd = app.stepFoot("fl", 0.12);
    mock.receive({ type: "ack", seq: cmd.seq, status: "rejected",
                   detail: "mode conflict" } as AckMessage);
    expect(app.state.stepButtonsEnabled()).toBe(true);
    const rec = app.state.ackLog.at(-1)!;
    expect(rec.seq).toBe(cmd.seq);
    expect(rec.status).toBe("rejected");
    expect(rec.detail).toContain("mode conflict");
  });

  it("estop always goes through, even while locked", () => {
    const { app, mock } = setup();
    app.stepFoot("fl", 0.12);
    expect(() => app.estop()).not.toThrow();
    expect(mock.sent.filter((m) => (m as { kind: string }).kind === "estop"))
      .toHaveLength(1);
  });

  it("disconnect disables everything", () => {
    const { app, mock } = setup();
    mock.close();
    expect(app.state.connection).toBe("disconnected");
    expect(app.state.stepButtonsEnabled()).toBe(false);
    expect(app.state.commandsEnabled()).toBe(false);
  });

  it("round-trip latency is surfaced from the accepted ack", () => {
    const { app, mock } = setup();
    let t = 1000;
    app.now = () => t;
    const cmd = app.drive({ vx: 0.2, vy: 0, vtheta: 0 });
    t = 1034;
    mock.receive({ type: "ack", seq: cmd.seq, status: "accepted" } as AckMessage);
    expect(app.state.lastLatencyMs).toBe(34);
  });
});
