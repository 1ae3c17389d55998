/**
 * WebSocket <-> TCP bridge so the browser shell can reach the service.
 *
 *   node --loader ts-node/esm src/bridge.ts --service-port 7321 --ws-port 7322
 *
 * Each WebSocket client gets its own TCP connection; frames pass through
 * unchanged (the browser speaks the same length-delimited protocol inside
 * binary WebSocket messages).
 */

import * as net from "node:net";

import { WebSocketServer } from "ws";

function arg(name: string, fallback: number): number {
  const i = process.argv.indexOf(name);
  return i >= 0 ? Number(process.argv[i + 1]) : fallback;
}

const servicePort = arg("--service-port", 7321);
const wsPort = arg("--ws-port", 7322);
const host = "127.0.0.1";

const wss = new WebSocketServer({ port: wsPort });
console.log(`bridge: ws://localhost:${wsPort} -> tcp ${host}:${servicePort}`);

wss.on("connection", (ws) => {
  const tcp = net.createConnection({ host, port: servicePort });
  tcp.on("data", (data) => ws.send(data));
  tcp.on("close", () => ws.close());
  tcp.on("error", () => ws.close());
  ws.on("message", (data: Buffer) => tcp.write(data));
  ws.on("close", () => tcp.end());
});
