// Every number the UI displays must originate in a service response.

import { describe, expect, it } from "vitest";

import { buildCompareView } from "../src/compare.js";
import { FrameController } from "../src/controller.js";
import { hoverThickness, measurementLines } from "../src/format.js";
import { initialViewState } from "../src/state.js";
import { FakeService, recordedNumbers } from "./fake.js";
import type { CompareResponse } from "../src/types.js";

const COMPARE: CompareResponse = {
  a: "s1", b: "s2", direction: "a_minus_b",
  measurements: {
    lipid_angle_deg: {
      n: 3, pairs: [[120.0, 115.0, 1], [90.0, 92.5, 2], [45.0, 45.0, 3]],
      bias: 0.833333, sd_diff: 3.81881, loa_low: -6.65234, loa_high: 8.31901,
      r2: 0.993543, slope: 0.96343, intercept: 2.79099,
    },
    min_thickness_um: {
      n: 2, pairs: [[150.0, 145.0, 1], [65.0, 60.0, 2]],
      bias: 5.0, sd_diff: 0.0, loa_low: 5.0, loa_high: 5.0,
      r2: 1.0, slope: 1.0, intercept: -5.0,
    },
  },
};

function displayedNumbers(strings: string[]): number[] {
  const out: number[] = [];
  for (const s of strings) {
    for (const m of s.matchAll(/-?\d+(?:\.\d+)?/g)) {
      out.push(parseFloat(m[0]));
    }
  }
  return out;
}

function tracedToService(shown: number, served: number[]): boolean {
  // formatting may round: accept values whose rounding produces the digits
  return served.some((v) => Math.abs(v - shown) <= 0.5 * 10 ** -decimals(shown));
}

function decimals(v: number): number {
  const s = String(v);
  return s.includes(".") ? s.split(".")[1].length : 0;
}

describe("single source of truth", () => {
  it("all displayed numbers trace back to recorded service responses", async () => {
    const fake = new FakeService();
    fake.compareResponse = COMPARE;
    const state = initialViewState();
    state.pullback = "step";
    state.nFrames = fake.nFrames;
    state.session = await fake.createSession("tester", "step");
    const ctl = new FrameController(fake, state);
    await ctl.refresh();
    ctl.dragArc(0, "end", -63);
    await ctl.commit();
    ctl.placeAnchor(210, 40);
    await ctl.commit();

    const shownStrings = [
      ...measurementLines(ctl.analysis!.measurements),
      hoverThickness(ctl.analysis!, 210, 504) ?? "",
      ...buildCompareView(await fake.compare("s1", "s2")).flatMap((p) => p.statLines),
    ];
    const served = recordedNumbers(fake);
    const shown = displayedNumbers(shownStrings).filter((v) => v !== 0 || true);
    expect(shown.length).toBeGreaterThan(10);
    for (const v of shown) {
      expect(tracedToService(v, served), `displayed ${v} not in any response`).toBe(true);
    }
  });

  it("compare panel stats are the service values verbatim", () => {
    const panels = buildCompareView(COMPARE);
    const angle = panels[0];
    expect(angle.statLines).toContain("bias 0.833");
    expect(angle.statLines).toContain("sd 3.819");
    expect(angle.statLines).toContain("LoA [-6.652, 8.319]");
    expect(angle.statLines).toContain("R² 0.994");
    expect(angle.biasLine).toBe(COMPARE.measurements.lipid_angle_deg.bias);
    expect(angle.loaLines).toEqual([-6.65234, 8.31901]);
  });

  it("identical sessions sit on the zero-difference line", () => {
    const identical: CompareResponse = {
      a: "x", b: "y", direction: "a_minus_b",
      measurements: {
        lipid_angle_deg: {
          n: 2, pairs: [[120.0, 120.0, 0], [90.0, 90.0, 1]],
          bias: 0.0, sd_diff: 0.0, loa_low: 0.0, loa_high: 0.0,
          r2: 1.0, slope: 1.0, intercept: 0.0,
        },
        min_thickness_um: {
          n: 2, pairs: [[150.0, 150.0, 0], [65.0, 65.0, 1]],
          bias: 0.0, sd_diff: 0.0, loa_low: 0.0, loa_high: 0.0,
          r2: 1.0, slope: 1.0, intercept: 0.0,
        },
      },
    };
    for (const panel of buildCompareView(identical)) {
      expect(panel.ba.every((p) => p.diff === 0)).toBe(true);
      expect(panel.biasLine).toBe(0.0);
    }
  });

  it("a constant-offset session shows a horizontal band at the offset", () => {
    const entry = COMPARE.measurements.min_thickness_um;
    const [panelAngle, panelThick] = buildCompareView(COMPARE);
    void panelAngle;
    expect(panelThick.ba.every((p) => p.diff === 5.0)).toBe(true);
    expect(panelThick.biasLine).toBe(entry.bias);
  });

  it("clicking a scatter point navigates to its frame", () => {
    const panels = buildCompareView(COMPARE);
    expect(panels[0].scatter[1].frame).toBe(2);
  });
});
