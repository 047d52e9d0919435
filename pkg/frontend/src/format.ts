// Display formatting. These helpers only echo numbers the service sent;
// the UI never derives a measurement itself.

import type { FrameAnalysis, Measurements } from "./types.js";

export function deg(value: number): string {
  return `${value.toFixed(1)}°`;
}

export function um(value: number): string {
  return `${value.toFixed(1)} µm`;
}

export function measurementLines(m: Measurements | null): string[] {
  if (m === null) {
    return ["no lipid in this frame"];
  }
  return [
    `lipid angle ${deg(m.lipid_angle_deg)}`,
    `min cap ${um(m.min_thickness_um)}`,
    `mean cap ${um(m.mean_thickness_um)}`,
    m.tcfa ? "TCFA: yes" : "TCFA: no",
  ];
}

/** Thickness readout for a hovered A-line, straight from the analysis JSON. */
export function hoverThickness(analysis: FrameAnalysis, aline: number,
                               nAlines: number): string | null {
  for (const b of analysis.boundaries) {
    const offset = (((aline - b.start) % nAlines) + nAlines) % nAlines;
    if (offset < b.length) {
      return um(b.thickness_um[offset]);
    }
  }
  return null;
}
