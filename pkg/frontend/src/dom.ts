/**
 * Browser shell: binds the console core to DOM widgets and two canvases
 * (top-down and side elevation). Loaded by index.html; connects through
 * the WebSocket bridge.
 */

import { ConsoleApp } from "./console.js";
import { indicators, sideView, topView } from "./render.js";
import { MessageDecoder, ServerMessage, encodeMessage } from "./protocol.js";
import { Transport } from "./transport.js";

function wsTransport(url: string): Promise<Transport> {
  return new Promise((resolve, reject) => {
    const ws = new WebSocket(url);
    ws.binaryType = "arraybuffer";
    const decoder = new MessageDecoder();
    let onMsg: ((m: ServerMessage) => void) | null = null;
    let onClose: (() => void) | null = null;
    ws.onmessage = (ev) => {
      for (const m of decoder.feed(new Uint8Array(ev.data as ArrayBuffer))) {
        onMsg?.(m);
      }
    };
    ws.onclose = () => onClose?.();
    ws.onerror = () => reject(new Error(`cannot reach ${url}`));
    ws.onopen = () => resolve({
      send: (m) => ws.send(encodeMessage(m)),
      onMessage: (h) => { onMsg = h; },
      onClose: (h) => { onClose = h; },
      close: () => ws.close(),
    });
  });
}

const $ = (id: string) => document.getElementById(id)!;

function drawTop(app: ConsoleApp): void {
  const canvas = $("top-view") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const frame = app.state.frame;
  if (!frame) return;
  const view = topView(frame);
  const scale = 120; // px per meter
  const ox = canvas.width / 2 - view.baseX * scale;
  const oy = canvas.height / 2 + view.baseY * scale;
  const X = (x: number) => ox + x * scale;
  const Y = (y: number) => oy - y * scale;

  if (view.supportPolygon.length >= 3) {
    ctx.beginPath();
    view.supportPolygon.forEach(([x, y], i) =>
      i === 0 ? ctx.moveTo(X(x), Y(y)) : ctx.lineTo(X(x), Y(y)));
    ctx.closePath();
    ctx.fillStyle = "rgba(80, 180, 120, 0.15)";
    ctx.fill();
    ctx.strokeStyle = "#4a8";
    ctx.stroke();
  }
  // base rectangle
  ctx.save();
  ctx.translate(X(view.baseX), Y(view.baseY));
  ctx.rotate(-view.baseYaw);
  ctx.strokeStyle = "#68a";
  ctx.strokeRect(-0.35 * scale, -0.25 * scale, 0.7 * scale, 0.5 * scale);
  ctx.beginPath();
  ctx.moveTo(0, 0);
  ctx.lineTo(0.35 * scale, 0);
  ctx.stroke();
  ctx.restore();
  // feet
  for (const f of view.feet) {
    ctx.beginPath();
    ctx.arc(X(f.x), Y(f.y), 7, 0, 2 * Math.PI);
    ctx.fillStyle = f.contact ? "#2a2" : "#fff";
    ctx.strokeStyle = f.anchored ? "#d60" : "#333";
    ctx.lineWidth = 2;
    ctx.fill();
    ctx.stroke();
    ctx.fillStyle = "#000";
    ctx.font = "10px sans-serif";
    ctx.fillText(f.name, X(f.x) - 7, Y(f.y) - 10);
  }
  // CoM
  ctx.beginPath();
  ctx.arc(X(view.comX), Y(view.comY), 4, 0, 2 * Math.PI);
  ctx.fillStyle = view.margin !== null && view.margin > 0 ? "#06c" : "#c00";
  ctx.fill();
}

function drawSide(app: ConsoleApp): void {
  const canvas = $("side-view") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const frame = app.state.frame;
  if (!frame) return;
  const view = sideView(frame);
  const scale = 120;
  const ox = canvas.width / 2 - view.baseX * scale;
  const oy = canvas.height - 30;
  const X = (x: number) => ox + x * scale;
  const Z = (z: number) => oy - z * scale;

  // terrain profile under the feet
  ctx.strokeStyle = "#964";
  for (const t of view.terrainUnderFeet) {
    ctx.beginPath();
    ctx.moveTo(X(t.x) - 15, Z(t.z));
    ctx.lineTo(X(t.x) + 15, Z(t.z));
    ctx.stroke();
  }
  // base
  ctx.strokeStyle = "#68a";
  ctx.strokeRect(X(view.baseX) - 0.35 * scale, Z(view.baseZ) - 8, 0.7 * scale, 16);
  // legs + feet
  for (const f of view.feet) {
    ctx.beginPath();
    ctx.moveTo(X(f.x), Z(view.baseZ));
    ctx.lineTo(X(f.x), Z(f.z));
    ctx.strokeStyle = "#999";
    ctx.stroke();
    ctx.beginPath();
    ctx.arc(X(f.x), Z(f.z), 6, 0, 2 * Math.PI);
    ctx.fillStyle = f.contact ? "#2a2" : "#fff";
    ctx.strokeStyle = "#333";
    ctx.fill();
    ctx.stroke();
  }
}

function renderAll(app: ConsoleApp): void {
  const ind = indicators(app.state);
  $("status").textContent =
    `${app.state.connection} | mode ${ind.mode} | step ${ind.steppingPhase}` +
    `${ind.steppingFoot ? "/" + ind.steppingFoot : ""} | margin ${ind.marginText}` +
    ` | rtt ${ind.latencyText}`;
  const feetDiv = $("terrain-readout");
  const frame = app.state.frame;
  if (frame) {
    feetDiv.textContent = (["fl", "fr", "rl", "rr"] as const).map((k) =>
      `${k}: h=${frame.feet[k].ground_height.toFixed(3)} m ` +
      `F=${frame.feet[k].force.toFixed(0)} N`).join("   ");
  }
  $("history").textContent = ind.history.slice(-8).join("\n");
  $("acks").textContent = app.state.ackLog.slice(-6).map((a) =>
    `#${a.seq} ${a.kind}: ${a.status} ${a.detail}`).join("\n");
  const locked = !app.state.stepButtonsEnabled();
  document.querySelectorAll<HTMLButtonElement>(".step-btn").forEach((b) => {
    b.disabled = locked;
  });
  drawTop(app);
  drawSide(app);
}

export async function start(): Promise<void> {
  const app = new ConsoleApp();
  const url = ($("ws-url") as HTMLInputElement).value;
  app.attach(await wsTransport(url));
  app.onChange(() => renderAll(app));

  const val = (id: string) => Number(($(id) as HTMLInputElement).value);

  $("drive-send").onclick = () =>
    app.drive({ vx: val("vx"), vy: val("vy"), vtheta: val("vtheta"),
                scale: val("throttle") });
  $("drive-stop").onclick = () => app.drive({ vx: 0, vy: 0, vtheta: 0 });
  $("estop").onclick = () => app.estop();
  for (const foot of ["fl", "fr", "rl", "rr"] as const) {
    $(`step-${foot}`).onclick = () => app.stepFoot(foot, val("step-length"));
    $(`feed-${foot}`).onclick = () => app.driveFoot(foot, val("step-length"));
  }
  $("shift").onclick = () => app.shiftBase(val("step-length"));
  $("wrist-send").onclick = () => {
    const mask = (axis: string) =>
      ($(`m-${axis}`) as HTMLInputElement).checked;
    app.wrist({
      endEffector: ($("ee") as HTMLSelectElement).value,
      frame: ($("wrist-frame") as HTMLSelectElement).value as never,
      translationMask: [mask("tx"), mask("ty"), mask("tz")],
      rotationMask: [mask("rx"), mask("ry"), mask("rz")],
      deltaTranslation: [val("dx"), val("dy"), val("dz")],
      deltaRotation: [val("drx"), val("dry"), val("drz")],
      speedScale: val("wrist-speed"),
    });
  };
  $("grasp-send").onclick = () =>
    app.grasp(($("grasp-category") as HTMLInputElement).value,
              ($("grasp-object") as HTMLInputElement).value);
  $("kf-send").onclick = () => {
    try {
      const doc = JSON.parse(($("kf-json") as HTMLTextAreaElement).value);
      app.keyframeQueue(doc.keyframes ?? doc);
    } catch (e) {
      $("acks").textContent = `keyframe JSON error: ${(e as Error).message}`;
    }
  };
  renderAll(app);
}

($("connect") as HTMLButtonElement).onclick = () => {
  start().catch((e) => {
    $("status").textContent = `connection failed: ${e.message}`;
  });
};
