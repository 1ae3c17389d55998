/**
 * Pure view models for the 2.5D visualization (top-down + side elevation).
 * DOM/canvas code consumes these; keeping them pure makes the
 * no-optimistic-state property directly testable.
 */

import { ConsoleState } from "./state.js";
import { TelemetryFrame, Vec3 } from "./protocol.js";

export interface FootView {
  name: string;
  x: number;
  y: number;
  z: number;
  groundHeight: number;
  force: number;
  contact: boolean;
  anchored: boolean;
}

export interface TopView {
  baseX: number;
  baseY: number;
  baseYaw: number;
  feet: FootView[];
  comX: number;
  comY: number;
  margin: number | null;
  supportPolygon: [number, number][];
}

export interface SideView {
  baseX: number;
  baseZ: number;
  feet: FootView[];
  terrainUnderFeet: { x: number; z: number }[];
}

export interface IndicatorView {
  mode: string;
  steppingPhase: string;
  steppingFoot: string | null;
  progress: number;
  marginText: string;
  contacts: Record<string, boolean>;
  latencyText: string;
  history: string[];
}

function yawOf(q: [number, number, number, number]): number {
  const [x, y, z, w] = q;
  // heading of the rotated x axis
  const ex = [1 - 2 * (y * y + z * z), 2 * (x * y + z * w)];
  return Math.atan2(ex[1], ex[0]);
}

function feetOf(frame: TelemetryFrame): FootView[] {
  return (["fl", "fr", "rl", "rr"] as const).map((name) => {
    const f = frame.feet[name];
    return {
      name,
      x: f.position[0],
      y: f.position[1],
      z: f.position[2],
      groundHeight: f.ground_height,
      force: f.force,
      contact: f.contact,
      anchored: f.anchored,
    };
  });
}

/** Convex hull (gift wrap is fine for 4 points) of contact feet. */
function supportPolygon(feet: FootView[]): [number, number][] {
  const pts = feet.filter((f) => f.contact).map((f) => [f.x, f.y] as [number, number]);
  if (pts.length < 3) return pts;
  const cx = pts.reduce((s, p) => s + p[0], 0) / pts.length;
  const cy = pts.reduce((s, p) => s + p[1], 0) / pts.length;
  return pts.slice().sort(
    (a, b) => Math.atan2(a[1] - cy, a[0] - cx) - Math.atan2(b[1] - cy, b[0] - cx));
}

export function topView(frame: TelemetryFrame): TopView {
  const feet = feetOf(frame);
  return {
    baseX: frame.base_pose.position[0],
    baseY: frame.base_pose.position[1],
    baseYaw: yawOf(frame.base_pose.orientation),
    feet,
    comX: frame.com[0],
    comY: frame.com[1],
    margin: frame.stability_margin,
    supportPolygon: supportPolygon(feet),
  };
}

export function sideView(frame: TelemetryFrame): SideView {
  const feet = feetOf(frame);
  return {
    baseX: frame.base_pose.position[0],
    baseZ: frame.base_pose.position[2],
    feet,
    terrainUnderFeet: feet.map((f) => ({ x: f.x, z: f.groundHeight })),
  };
}

export function indicators(state: ConsoleState): IndicatorView {
  const frame = state.frame;
  if (frame === null) {
    return {
      mode: "-", steppingPhase: "-", steppingFoot: null, progress: 0,
      marginText: "-", contacts: {}, latencyText: "-", history: [],
    };
  }
  const contacts: Record<string, boolean> = {};
  for (const f of feetOf(frame)) contacts[f.name] = f.contact;
  return {
    mode: frame.mode,
    steppingPhase: frame.stepping.phase,
    steppingFoot: frame.stepping.foot,
    progress: frame.stepping.progress,
    marginText: frame.stability_margin === null
      ? "n/a" : `${(frame.stability_margin * 100).toFixed(1)} cm`,
    contacts,
    latencyText: state.lastLatencyMs === null
      ? "-" : `${state.lastLatencyMs.toFixed(0)} ms`,
    history: frame.stepping.history.map((h) =>
      `${h["kind"]} ${h["foot"] ?? ""} ${h["outcome"]}`.trim()),
  };
}
