/**
 * Console application core: wires transport, state and command factory.
 * The UI layer (node REPL or browser shell) only calls the methods here
 * and renders the view models.
 */

import { CommandFactory, DriveInput, WristInput } from "./commands.js";
import { CommandMessage, ServerMessage } from "./protocol.js";
import { ConsoleState } from "./state.js";
import { Transport } from "./transport.js";

export class ConsoleApp {
  readonly state = new ConsoleState();
  readonly commands = new CommandFactory();
  private transport: Transport | null = null;
  private listeners: (() => void)[] = [];
  now: () => number = () => Date.now();

  attach(transport: Transport): void {
    this.transport = transport;
    this.state.connection = "connecting";
    transport.onMessage((msg: ServerMessage) => {
      this.state.apply(msg, this.now());
      this.emit();
    });
    transport.onClose(() => {
      this.state.disconnected();
      this.emit();
    });
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const l of this.listeners) l();
  }

  private send(msg: CommandMessage): CommandMessage {
    if (!this.transport) throw new Error("not connected");
    this.state.recordSent(msg, this.now());
    this.transport.send(msg);
    this.emit();
    return msg;
  }

  drive(input: DriveInput): CommandMessage {
    return this.send(this.commands.drive(input));
  }

  stepFoot(foot: "fl" | "fr" | "rl" | "rr", length: number): CommandMessage {
    if (!this.state.stepButtonsEnabled()) {
      throw new Error("stepping not available (locked or disconnected)");
    }
    return this.send(this.commands.stepFoot(foot, length));
  }

  driveFoot(foot: "fl" | "fr" | "rl" | "rr", length: number): CommandMessage {
    if (!this.state.stepButtonsEnabled()) {
      throw new Error("stepping not available (locked or disconnected)");
    }
    return this.send(this.commands.driveFoot(foot, length));
  }

  shiftBase(length: number): CommandMessage {
    if (!this.state.stepButtonsEnabled()) {
      throw new Error("stepping not available (locked or disconnected)");
    }
    return this.send(this.commands.shiftBase(length));
  }

  wrist(input: WristInput): CommandMessage {
    return this.send(this.commands.wrist(input));
  }

  keyframeQueue(keyframes: Record<string, unknown>[]): CommandMessage {
    return this.send(this.commands.keyframeQueue(keyframes));
  }

  grasp(category: string, objectId: string, arm?: string): CommandMessage {
    return this.send(this.commands.grasp(category, objectId, arm));
  }

  estop(): CommandMessage {
    // the stop must always go out, regardless of any UI lock state
    return this.send(this.commands.estop());
  }

  close(): void {
    this.transport?.close();
  }
}
