// Coordinate transforms and edit-gesture arithmetic. All geometry here is
// about where to draw and what edit request a gesture produces; measurement
// numbers always come back from the service.

import type { ArcSpec } from "./types.js";

export interface PolarView {
  nAlines: number;
  nSamples: number;
  width: number;   // canvas px, radial axis
  height: number;  // canvas px, angular axis
}

export interface CartesianView {
  nAlines: number;
  nSamples: number;
  size: number;    // square canvas px
}

/** Polar panel: x is radius, y is A-line index. */
export function polarToCanvas(v: PolarView, aline: number, r: number): [number, number] {
  return [(r / v.nSamples) * v.width, (aline / v.nAlines) * v.height];
}

export function canvasToPolar(v: PolarView, x: number, y: number): { aline: number; r: number } {
  const aline = Math.round((y / v.height) * v.nAlines);
  const r = (x / v.width) * v.nSamples;
  return { aline: ((aline % v.nAlines) + v.nAlines) % v.nAlines, r };
}

/** Cartesian panel: 12 o'clock is A-line 0, angle grows clockwise. */
export function cartesianToCanvas(v: CartesianView, aline: number, r: number): [number, number] {
  const theta = (aline / v.nAlines) * 2 * Math.PI;
  const scale = (v.size / 2) / v.nSamples;
  const c = (v.size - 1) / 2;
  return [c + r * scale * Math.sin(theta), c - r * scale * Math.cos(theta)];
}

export function circularDelta(from: number, to: number, nAlines: number): number {
  let d = (to - from) % nAlines;
  if (d > nAlines / 2) d -= nAlines;
  if (d < -nAlines / 2) d += nAlines;
  return d;
}

export function arcEndpoints(arc: ArcSpec, nAlines: number): { start: number; end: number } {
  return { start: arc.start, end: (arc.start + arc.length - 1) % nAlines };
}

/**
 * New arc after dragging one endpoint by a signed A-line delta. Dragging the
 * end outward by k grows the length by k; dragging the start outward grows it
 * backward. Length clamps to [1, nAlines].
 */
export function dragArcEndpoint(arc: ArcSpec, which: "start" | "end",
                                deltaAlines: number, nAlines: number): ArcSpec {
  const clamp = (len: number) => Math.max(1, Math.min(nAlines, len));
  if (which === "end") {
    return { start: arc.start, length: clamp(arc.length + deltaAlines) };
  }
  const newStart = (((arc.start + deltaAlines) % nAlines) + nAlines) % nAlines;
  return { start: newStart, length: clamp(arc.length - deltaAlines) };
}

/** Which arc endpoint (if any) is within tol A-lines of the pointer. */
export function hitArcEndpoint(arcs: ArcSpec[], aline: number, nAlines: number,
                               tol = 4): { index: number; which: "start" | "end" } | null {
  for (let i = 0; i < arcs.length; i++) {
    const { start, end } = arcEndpoints(arcs[i], nAlines);
    if (Math.abs(circularDelta(start, aline, nAlines)) <= tol) {
      return { index: i, which: "start" };
    }
    if (Math.abs(circularDelta(end, aline, nAlines)) <= tol) {
      return { index: i, which: "end" };
    }
  }
  return null;
}

export function alineInsideArc(arc: ArcSpec, aline: number, nAlines: number): boolean {
  return (((aline - arc.start) % nAlines) + nAlines) % nAlines < arc.length;
}
