// Compare panel view-model: scatter + Bland-Altman geometry and the stat
// lines, every number verbatim from the service's agreement response.

import type { AgreementEntry, CompareResponse } from "./types.js";

export interface ScatterPoint {
  x: number;        // analyst a
  y: number;        // analyst b
  frame: number;
}

export interface BAPoint {
  mean: number;
  diff: number;     // a - b, as served
  frame: number;
}

export interface ComparePanel {
  title: string;
  statLines: string[];
  scatter: ScatterPoint[];
  ba: BAPoint[];
  biasLine: number | null;
  loaLines: [number, number] | null;
}

function fmt(v: number | null | undefined, digits = 3): string {
  return v === null || v === undefined ? "n/a" : v.toFixed(digits);
}

export function buildPanel(title: string, entry: AgreementEntry): ComparePanel {
  const scatter = entry.pairs.map(([a, b, frame]) => ({ x: a, y: b, frame }));
  const ba = entry.pairs.map(([a, b, frame]) => ({
    mean: (a + b) / 2,   // plot position only; stats below come from the service
    diff: a - b,
    frame,
  }));
  const statLines = [
    `n = ${entry.n}`,
    `bias ${fmt(entry.bias)}`,
    `sd ${fmt(entry.sd_diff)}`,
    `LoA [${fmt(entry.loa_low)}, ${fmt(entry.loa_high)}]`,
    `R² ${fmt(entry.r2)}`,
    `slope ${fmt(entry.slope)}  intercept ${fmt(entry.intercept)}`,
  ];
  return {
    title,
    statLines,
    scatter,
    ba,
    biasLine: entry.bias ?? null,
    loaLines: entry.loa_low !== undefined && entry.loa_high !== undefined
      ? [entry.loa_low, entry.loa_high] : null,
  };
}

export function buildCompareView(resp: CompareResponse): ComparePanel[] {
  return [
    buildPanel("lipid angle (deg)", resp.measurements.lipid_angle_deg),
    buildPanel("min cap thickness (um)", resp.measurements.min_thickness_um),
  ];
}

/** Frame to navigate to when a scatter point is clicked. */
export function pointFrame(panel: ComparePanel, index: number): number {
  return panel.scatter[index].frame;
}
