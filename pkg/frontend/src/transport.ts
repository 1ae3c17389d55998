/**
 * Transports. The console core is transport-agnostic: the node TCP
 * transport talks to the live service directly; the mock feeds recorded
 * or synthetic streams to tests.
 */

import { MessageDecoder, ServerMessage, encodeMessage } from "./protocol.js";

export interface Transport {
  send(msg: object): void;
  onMessage(handler: (msg: ServerMessage) => void): void;
  onClose(handler: () => void): void;
  close(): void;
}

export class MockTransport implements Transport {
  sent: object[] = [];
  private handler: ((msg: ServerMessage) => void) | null = null;
  private closeHandler: (() => void) | null = null;

  send(msg: object): void {
    this.sent.push(msg);
  }

  onMessage(handler: (msg: ServerMessage) => void): void {
    this.handler = handler;
  }

  onClose(handler: () => void): void {
    this.closeHandler = handler;
  }

  close(): void {
    this.closeHandler?.();
  }

  /** Test hook: push a server message into the console. */
  receive(msg: ServerMessage): void {
    this.handler?.(msg);
  }
}

/** Raw TCP transport for running the console under node. */
export async function connectTcp(host: string, port: number): Promise<Transport> {
  const net = await import("node:net");
  const socket = net.createConnection({ host, port });
  const decoder = new MessageDecoder();
  let messageHandler: ((msg: ServerMessage) => void) | null = null;
  let closeHandler: (() => void) | null = null;
  socket.on("data", (data: Buffer) => {
    for (const msg of decoder.feed(new Uint8Array(data))) {
      messageHandler?.(msg);
    }
  });
  socket.on("close", () => closeHandler?.());
  socket.on("error", () => closeHandler?.());
  await new Promise<void>((resolve, reject) => {
    socket.once("connect", resolve);
    socket.once("error", reject);
  });
  return {
    send: (msg: object) => socket.write(encodeMessage(msg)),
    onMessage: (h) => { messageHandler = h; },
    onClose: (h) => { closeHandler = h; },
    close: () => socket.end(),
  };
}
