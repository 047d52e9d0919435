// View state and the pending-edit staging area (pure reducers).

import type { ArcSpec, FrameAnalysis } from "./types.js";
import { dragArcEndpoint } from "./geometry.js";

export type Tool = "arc" | "anchor" | "accept";
export type ViewMode = "polar" | "cartesian";

export interface ViewState {
  pullback: string | null;
  frame: number;
  nFrames: number;
  nAlines: number;
  nSamples: number;
  view: ViewMode;
  session: string | null;
  tool: Tool;
  showOverlays: boolean;
}

export interface PendingEdit {
  arcs: ArcSpec[] | null;        // staged full arc list (null = no arc edit)
  anchors: [number, number][];   // staged anchor points
  dirty: boolean;
}

export const emptyPending: PendingEdit = { arcs: null, anchors: [], dirty: false };

export function initialViewState(): ViewState {
  return {
    pullback: null, frame: 0, nFrames: 0, nAlines: 504, nSamples: 512,
    view: "polar", session: null, tool: "arc", showOverlays: true,
  };
}

export function stepFrame(s: ViewState, delta: number): ViewState {
  if (s.nFrames === 0) return s;
  const frame = Math.max(0, Math.min(s.nFrames - 1, s.frame + delta));
  return { ...s, frame };
}

export function jumpToFrame(s: ViewState, frame: number): ViewState {
  if (frame < 0 || frame >= s.nFrames) return s;
  return { ...s, frame };
}

export function stageArcDrag(pending: PendingEdit, analysis: FrameAnalysis,
                             arcIndex: number, which: "start" | "end",
                             deltaAlines: number, nAlines: number): PendingEdit {
  const base = pending.arcs ?? analysis.arcs;
  if (arcIndex < 0 || arcIndex >= base.length) return pending;
  const arcs = base.map((a, i) =>
    i === arcIndex ? dragArcEndpoint(a, which, deltaAlines, nAlines) : { ...a });
  return { ...pending, arcs, dirty: true };
}

export function stageAnchor(pending: PendingEdit, aline: number, r: number): PendingEdit {
  return { ...pending, anchors: [...pending.anchors, [aline, r]], dirty: true };
}

/** Undo all staged interaction (allowed any time before the PUT). */
export function discardPending(): PendingEdit {
  return { ...emptyPending };
}

export function clearAfterPut(): PendingEdit {
  return { ...emptyPending };
}

export function editBodyFromPending(pending: PendingEdit, revision: number) {
  const body: { arcs?: ArcSpec[]; anchors?: [number, number][]; expected_revision: number } =
    { expected_revision: revision };
  if (pending.arcs !== null) body.arcs = pending.arcs;
  if (pending.anchors.length > 0) body.anchors = pending.anchors;
  return body;
}
