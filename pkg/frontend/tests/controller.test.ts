import { describe, expect, it } from "vitest";

import { FrameController } from "../src/controller.js";
import { initialViewState } from "../src/state.js";
import { FakeService } from "./fake.js";

async function setup() {
  const fake = new FakeService();
  const state = initialViewState();
  state.pullback = "step";
  state.nFrames = fake.nFrames;
  state.session = await fake.createSession("tester", "step");
  const ctl = new FrameController(fake, state);
  await ctl.refresh();
  return { fake, state, ctl };
}

describe("arc editing", () => {
  it("dragging an arc end by 63 A-lines changes the displayed angle by exactly 45 degrees", async () => {
    const { fake, ctl } = await setup();
    const before = ctl.analysis!.measurements!.lipid_angle_deg;
    expect(before).toBe(120.0);

    ctl.dragArc(0, "end", -63);
    expect(ctl.pending.dirty).toBe(true);
    const ok = await ctl.commit();
    expect(ok).toBe(true);

    const sent = fake.putBodies.at(-1)!.body;
    expect(sent.arcs).toEqual([{ start: 126, length: 105 }]);

    const after = ctl.analysis!.measurements!.lipid_angle_deg;
    expect(before - after).toBe(45.0);
    // displayed value is the service's response, verbatim
    const lastAnalysis = fake.responses.at(-1) as { measurements: { lipid_angle_deg: number } };
    expect(after).toBe(lastAnalysis.measurements.lipid_angle_deg);
  });

  it("staged drags preview locally and clear after the PUT", async () => {
    const { ctl } = await setup();
    ctl.dragArc(0, "start", 10);
    expect(ctl.displayedArcs()).toEqual([{ start: 136, length: 158 }]);
    await ctl.commit();
    expect(ctl.pending.arcs).toBeNull();
    expect(ctl.pending.dirty).toBe(false);
    expect(ctl.analysis!.arcs).toEqual([{ start: 136, length: 158 }]);
  });

  it("escape-undo before PUT restores the automated overlay", async () => {
    const { ctl } = await setup();
    const auto = ctl.displayedArcs();
    ctl.dragArc(0, "end", 30);
    expect(ctl.displayedArcs()).not.toEqual(auto);
    ctl.undoStaged();
    expect(ctl.displayedArcs()).toEqual(auto);
    expect(ctl.pending.dirty).toBe(false);
  });
});

describe("anchors", () => {
  it("placing an anchor redraws the boundary through it", async () => {
    const { ctl } = await setup();
    ctl.placeAnchor(210, 40);
    const ok = await ctl.commit();
    expect(ok).toBe(true);
    const b = ctl.analysis!.boundaries[0];
    const pos = (210 - b.start + 504) % 504;
    expect(b.r_abluminal_px[pos]).toBe(40);
    // smoothness bound from the service's constrained solve
    for (let j = 1; j < b.r_abluminal_px.length; j++) {
      expect(Math.abs(b.r_abluminal_px[j] - b.r_abluminal_px[j - 1])).toBeLessThanOrEqual(2);
    }
    // after PUT the display equals a fresh GET with the session
    const fresh = await ctl.api.getAnalysis("step", ctl.state.frame, ctl.state.session, "polar");
    expect(ctl.analysis).toEqual(fresh);
  });

  it("a 422 shows inline at the offending anchor and restores the overlay", async () => {
    const { fake, ctl } = await setup();
    const auto = ctl.analysis!;
    fake.rejectNextPut = { status: 422, detail: "infeasible anchors" };
    ctl.placeAnchor(210, 299);
    const ok = await ctl.commit();
    expect(ok).toBe(false);
    expect(ctl.error!.message).toContain("infeasible");
    expect(ctl.error!.at).toEqual([210, 299]);
    expect(ctl.pending.anchors).toEqual([]);
    expect(ctl.displayedArcs()).toEqual(auto.arcs);
  });

  it("a 409 conflict reports the current revision and keeps state clean", async () => {
    const { fake, ctl } = await setup();
    fake.rejectNextPut = { status: 409, detail: "revision conflict" };
    ctl.dragArc(0, "end", 5);
    const ok = await ctl.commit();
    expect(ok).toBe(false);
    expect(ctl.error!.message).toContain("edited elsewhere");
    expect(ctl.pending.dirty).toBe(false);
  });
});
