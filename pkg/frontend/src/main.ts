// DOM glue: wires the controllers to canvases and inputs. All measurement
// numbers on screen pass through format.ts / compare.ts untouched.

import { HttpApiClient, ServiceError } from "./api.js";
import { FrameController } from "./controller.js";
import { buildCompareView, ComparePanel } from "./compare.js";
import { hoverThickness, measurementLines } from "./format.js";
import {
  PolarView, canvasToPolar, cartesianToCanvas, hitArcEndpoint, circularDelta,
  polarToCanvas,
} from "./geometry.js";
import { initialViewState, jumpToFrame, stepFrame } from "./state.js";
import { stripCellColor, stripClickToFrame } from "./strip.js";

const api = new HttpApiClient("");
const state = initialViewState();
const controller = new FrameController(api, state);

const el = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;
const frameCanvas = () => el<HTMLCanvasElement>("frame-canvas");
const stripCanvas = () => el<HTMLCanvasElement>("strip-canvas");

let stripRows: ((number | null)[] | null)[] = [];
let drag: { arcIndex: number; which: "start" | "end"; fromAline: number } | null = null;

function polarView(): PolarView {
  const c = frameCanvas();
  return { nAlines: state.nAlines, nSamples: state.nSamples, width: c.width, height: c.height };
}

function drawOverlays(ctx: CanvasRenderingContext2D): void {
  const a = controller.analysis;
  if (!a || !state.showOverlays || a.failed || !a.overlays) return;
  const v = polarView();
  const cart = { nAlines: state.nAlines, nSamples: state.nSamples, size: frameCanvas().width };
  const toXY = (aline: number, r: number): [number, number] =>
    state.view === "polar" ? polarToCanvas(v, aline, r) : cartesianToCanvas(cart, aline, r);

  ctx.lineWidth = 1.5;
  // lumen polyline (service coordinates are view-native already for cartesian)
  ctx.strokeStyle = "#e33";
  ctx.beginPath();
  a.overlays.lumen.forEach(([p, q], i) => {
    const [x, y] = state.view === "polar" ? toXY(p, q) : [p * scaleCart(), q * scaleCart()];
    if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
  });
  ctx.stroke();

  // lipid arcs (green) on the angular axis at the lumen
  ctx.strokeStyle = "#2c2";
  ctx.lineWidth = 4;
  for (const arc of controller.displayedArcs()) {
    ctx.beginPath();
    for (let j = 0; j < arc.length; j++) {
      const aline = (arc.start + j) % state.nAlines;
      const [x, y] = toXY(aline, 2);
      if (j === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
    }
    ctx.stroke();
  }

  // cap boundary (yellow)
  ctx.strokeStyle = "#dd2";
  ctx.lineWidth = 1.5;
  for (const cap of a.overlays.cap) {
    ctx.beginPath();
    cap.points.forEach(([p, q], i) => {
      const [x, y] = state.view === "polar" ? toXY(p, q) : [p * scaleCart(), q * scaleCart()];
      if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }

  // staged anchors
  ctx.fillStyle = "#0bf";
  for (const [aline, r] of controller.pending.anchors) {
    const [x, y] = toXY(aline, r);
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fill();
  }
  if (controller.error?.at) {
    const [aline, r] = controller.error.at;
    const [x, y] = toXY(aline, r);
    ctx.strokeStyle = "#f40";
    ctx.beginPath();
    ctx.arc(x, y, 7, 0, 2 * Math.PI);
    ctx.stroke();
  }
}

function scaleCart(): number {
  return frameCanvas().width / (2 * state.nSamples);
}

function redraw(): void {
  const canvas = frameCanvas();
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (state.pullback === null) return;
  const img = new Image();
  img.onload = () => {
    ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
    drawOverlays(ctx);
  };
  img.src = api.frameImageUrl(state.pullback, state.frame, state.view);

  const lines = controller.analysis ? measurementLines(controller.analysis.measurements) : [];
  el<HTMLDivElement>("measurements").innerText = lines.join("\n");
  el<HTMLDivElement>("frame-label").innerText =
    `frame ${state.frame + 1} / ${state.nFrames}` +
    (controller.analysis?.accepted ? "  [accepted]" : "");
  el<HTMLDivElement>("error-box").innerText = controller.error?.message ?? "";
  drawStrip();
}

function drawStrip(): void {
  const canvas = stripCanvas();
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (stripRows.length === 0) return;
  const colW = canvas.width / stripRows.length;
  for (let f = 0; f < stripRows.length; f++) {
    const row = stripRows[f];
    if (!row) continue;
    const cellH = canvas.height / row.length;
    for (let b = 0; b < row.length; b++) {
      ctx.fillStyle = stripCellColor(row[b]);
      ctx.fillRect(f * colW, b * cellH, Math.ceil(colW), Math.ceil(cellH));
    }
  }
  ctx.strokeStyle = "#fff";
  ctx.strokeRect(state.frame * colW, 0, colW, canvas.height);
}

async function loadStripRow(frame: number): Promise<void> {
  if (stripRows[frame] !== undefined || state.pullback === null) return;
  stripRows[frame] = null;
  const a = await api.getAnalysis(state.pullback, frame, state.session, "polar");
  stripRows[frame] = a.thickness_map_row;
}

async function selectPullback(pid: string): Promise<void> {
  const info = (await api.listPullbacks()).find((p) => p.id === pid);
  if (!info) return;
  state.pullback = pid;
  state.frame = 0;
  state.nFrames = info.n_frames;
  state.nAlines = info.n_alines;
  state.nSamples = info.n_samples;
  stripRows = new Array(info.n_frames).fill(undefined);
  await controller.refresh();
  void prefetchStrip();
}

async function prefetchStrip(): Promise<void> {
  for (let f = 0; f < state.nFrames; f++) {
    await loadStripRow(f);
    if (f % 8 === 0) drawStrip();
  }
  drawStrip();
}

async function showCompare(): Promise<void> {
  const a = el<HTMLInputElement>("compare-a").value.trim();
  const b = el<HTMLInputElement>("compare-b").value.trim();
  if (!a || !b) return;
  try {
    const resp = await api.compare(a, b);
    renderComparePanels(buildCompareView(resp));
  } catch (err) {
    if (err instanceof ServiceError) {
      el<HTMLDivElement>("error-box").innerText = err.message;
      return;
    }
    throw err;
  }
}

function renderComparePanels(panels: ComparePanel[]): void {
  const host = el<HTMLDivElement>("compare-panels");
  host.innerHTML = "";
  for (const panel of panels) {
    const box = document.createElement("div");
    box.className = "compare-panel";
    const h = document.createElement("h3");
    h.innerText = panel.title;
    const stats = document.createElement("pre");
    stats.innerText = panel.statLines.join("\n");
    const canvas = document.createElement("canvas");
    canvas.width = 280;
    canvas.height = 200;
    drawScatter(canvas, panel);
    canvas.addEventListener("click", (ev) => {
      const idx = nearestPoint(canvas, panel, ev.offsetX, ev.offsetY);
      if (idx >= 0) {
        Object.assign(state, jumpToFrame(state, panel.scatter[idx].frame));
        void controller.refresh();
      }
    });
    box.append(h, stats, canvas);
    host.append(box);
  }
}

interface Projected { px: number[]; py: number[] }
const projections = new WeakMap<HTMLCanvasElement, Projected>();

function drawScatter(canvas: HTMLCanvasElement, panel: ComparePanel): void {
  const ctx = canvas.getContext("2d")!;
  const xs = panel.ba.map((p) => p.mean);
  const ys = panel.ba.map((p) => p.diff);
  const pad = 24;
  const lo = Math.min(...xs), hi = Math.max(...xs);
  const ylo = Math.min(...ys, panel.loaLines?.[0] ?? 0);
  const yhi = Math.max(...ys, panel.loaLines?.[1] ?? 0);
  const sx = (v: number) => pad + ((v - lo) / Math.max(hi - lo, 1e-9)) * (canvas.width - 2 * pad);
  const sy = (v: number) => canvas.height - pad
    - ((v - ylo) / Math.max(yhi - ylo, 1e-9)) * (canvas.height - 2 * pad);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (panel.biasLine !== null) {
    ctx.strokeStyle = "#888";
    ctx.beginPath();
    ctx.moveTo(pad, sy(panel.biasLine));
    ctx.lineTo(canvas.width - pad, sy(panel.biasLine));
    ctx.stroke();
  }
  if (panel.loaLines) {
    ctx.strokeStyle = "#bbb";
    ctx.setLineDash([4, 3]);
    for (const v of panel.loaLines) {
      ctx.beginPath();
      ctx.moveTo(pad, sy(v));
      ctx.lineTo(canvas.width - pad, sy(v));
      ctx.stroke();
    }
    ctx.setLineDash([]);
  }
  ctx.fillStyle = "#06c";
  const px: number[] = [], py: number[] = [];
  panel.ba.forEach((p) => {
    const x = sx(p.mean), y = sy(p.diff);
    px.push(x); py.push(y);
    ctx.beginPath();
    ctx.arc(x, y, 3, 0, 2 * Math.PI);
    ctx.fill();
  });
  projections.set(canvas, { px, py });
}

function nearestPoint(canvas: HTMLCanvasElement, panel: ComparePanel,
                      x: number, y: number): number {
  const proj = projections.get(canvas);
  if (!proj) return -1;
  let best = -1, bestD = 64;
  for (let i = 0; i < proj.px.length; i++) {
    const d = (proj.px[i] - x) ** 2 + (proj.py[i] - y) ** 2;
    if (d < bestD) { best = i; bestD = d; }
  }
  return best;
}

function wireEvents(): void {
  const canvas = frameCanvas();
  canvas.addEventListener("mousedown", (ev) => {
    if (state.view !== "polar" || !state.session) return;
    const { aline, r } = canvasToPolar(polarView(), ev.offsetX, ev.offsetY);
    if (state.tool === "arc") {
      const hit = hitArcEndpoint(controller.displayedArcs(), aline, state.nAlines);
      if (hit) drag = { arcIndex: hit.index, which: hit.which, fromAline: aline };
    } else if (state.tool === "anchor") {
      controller.placeAnchor(aline, r);
      void controller.commit();
    }
  });
  canvas.addEventListener("mousemove", (ev) => {
    const { aline } = canvasToPolar(polarView(), ev.offsetX, ev.offsetY);
    if (controller.analysis) {
      const txt = hoverThickness(controller.analysis, aline, state.nAlines);
      el<HTMLDivElement>("hover-readout").innerText = txt ?? "";
    }
    if (drag) {
      const delta = circularDelta(drag.fromAline, aline, state.nAlines);
      controller.dragArc(drag.arcIndex, drag.which, delta);
      drag = { ...drag, fromAline: aline };
    }
  });
  canvas.addEventListener("mouseup", () => {
    if (drag) {
      drag = null;
      void controller.commit();   // staged edit sent on release
    }
  });

  stripCanvas().addEventListener("click", (ev) => {
    const frame = stripClickToFrame(ev.offsetX, stripCanvas().width, state.nFrames);
    Object.assign(state, jumpToFrame(state, frame));
    void controller.refresh();
  });

  document.addEventListener("keydown", (ev) => {
    if (ev.key === "ArrowRight") {
      Object.assign(state, stepFrame(state, 1));
      void controller.refresh();
    } else if (ev.key === "ArrowLeft") {
      Object.assign(state, stepFrame(state, -1));
      void controller.refresh();
    } else if (ev.key === "a" && state.session) {
      void controller.acceptFrame();
    } else if (ev.key === "Escape") {
      controller.undoStaged();
    }
  });

  el<HTMLSelectElement>("view-select").addEventListener("change", (ev) => {
    state.view = (ev.target as HTMLSelectElement).value as "polar" | "cartesian";
    void controller.refresh();
  });
  el<HTMLSelectElement>("tool-select").addEventListener("change", (ev) => {
    state.tool = (ev.target as HTMLSelectElement).value as "arc" | "anchor" | "accept";
  });
  el<HTMLInputElement>("overlay-toggle").addEventListener("change", (ev) => {
    state.showOverlays = (ev.target as HTMLInputElement).checked;
    redraw();
  });
  el<HTMLButtonElement>("session-btn").addEventListener("click", () => {
    void (async () => {
      const analyst = el<HTMLInputElement>("analyst-input").value.trim() || "analyst";
      if (state.pullback === null) return;
      state.session = await api.createSession(analyst, state.pullback);
      el<HTMLDivElement>("session-label").innerText = `session ${state.session}`;
      await controller.refresh();
    })();
  });
  el<HTMLButtonElement>("compare-btn").addEventListener("click", () => void showCompare());
  el<HTMLSelectElement>("pullback-select").addEventListener("change", (ev) => {
    void selectPullback((ev.target as HTMLSelectElement).value);
  });
}

async function boot(): Promise<void> {
  controller.onChange = redraw;
  wireEvents();
  const pullbacks = await api.listPullbacks();
  const sel = el<HTMLSelectElement>("pullback-select");
  sel.innerHTML = pullbacks.map((p) => `<option value="${p.id}">${p.id}</option>`).join("");
  if (pullbacks.length > 0) await selectPullback(pullbacks[0].id);
}

if (typeof document !== "undefined") {
  void boot();
}
