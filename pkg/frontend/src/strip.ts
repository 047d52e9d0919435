// Longitudinal thickness-map strip: one column per frame, colored over the
// 0-300 um ramp the service uses for exported maps; click to jump to a frame.

export interface StripCell {
  frame: number;
  bin: number;
  value: number;   // um, as served
}

export const STRIP_RANGE_UM: [number, number] = [0, 300];

/** Viridis-like compact ramp (anchor colors, linear interpolation). */
const RAMP: [number, number, number][] = [
  [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
];

export function rampColor(value: number, range: [number, number] = STRIP_RANGE_UM): string {
  const [lo, hi] = range;
  const t = Math.max(0, Math.min(1, (value - lo) / (hi - lo)));
  const pos = t * (RAMP.length - 1);
  const i = Math.min(RAMP.length - 2, Math.floor(pos));
  const f = pos - i;
  const mix = (a: number, b: number) => Math.round(a + (b - a) * f);
  const [r, g, b] = [0, 1, 2].map((k) => mix(RAMP[i][k], RAMP[i + 1][k]));
  return `rgb(${r},${g},${b})`;
}

export const SENTINEL_COLOR = "rgb(128,128,128)";

export function stripCellColor(value: number | null): string {
  return value === null ? SENTINEL_COLOR : rampColor(value);
}

/** Map a click x-position on the strip to a frame index. */
export function stripClickToFrame(x: number, stripWidth: number, nFrames: number): number {
  const frame = Math.floor((x / stripWidth) * nFrames);
  return Math.max(0, Math.min(nFrames - 1, frame));
}
