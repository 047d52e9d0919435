// Frame editing controller: stages gestures, sends them on release, and
// atomically replaces the display with the service's response. A failed PUT
// restores the prior overlay and surfaces the error.

import type { ApiClient } from "./api.js";
import { ServiceError } from "./api.js";
import type { FrameAnalysis } from "./types.js";
import {
  PendingEdit, ViewState, clearAfterPut, discardPending, emptyPending,
  editBodyFromPending, stageAnchor, stageArcDrag,
} from "./state.js";

export interface InlineError {
  message: string;
  at?: [number, number];   // anchor point the service rejected
}

export class FrameController {
  api: ApiClient;
  state: ViewState;
  analysis: FrameAnalysis | null = null;
  pending: PendingEdit = { ...emptyPending };
  error: InlineError | null = null;
  onChange: () => void = () => {};

  constructor(api: ApiClient, state: ViewState) {
    this.api = api;
    this.state = state;
  }

  async refresh(): Promise<void> {
    const s = this.state;
    if (s.pullback === null) return;
    this.analysis = await this.api.getAnalysis(s.pullback, s.frame, s.session, s.view);
    this.error = null;
    this.onChange();
  }

  dragArc(arcIndex: number, which: "start" | "end", deltaAlines: number): void {
    if (!this.analysis) return;
    this.pending = stageArcDrag(this.pending, this.analysis, arcIndex, which,
                                deltaAlines, this.state.nAlines);
    this.onChange();
  }

  placeAnchor(aline: number, r: number): void {
    this.pending = stageAnchor(this.pending, aline, Math.round(r));
    this.onChange();
  }

  undoStaged(): void {
    this.pending = discardPending();
    this.error = null;
    this.onChange();
  }

  /** Arc list to draw: staged edits preview until the PUT lands. */
  displayedArcs() {
    if (this.pending.arcs !== null) return this.pending.arcs;
    return this.analysis ? this.analysis.arcs : [];
  }

  async commit(): Promise<boolean> {
    const s = this.state;
    if (!this.analysis || !s.session || s.pullback === null || !this.pending.dirty) {
      return false;
    }
    const body = editBodyFromPending(this.pending, this.analysis.revision);
    try {
      await this.api.putEdits(s.session, s.frame, body);
    } catch (err) {
      if (err instanceof ServiceError) {
        this.error = {
          message: err.status === 409
            ? `frame was edited elsewhere (revision ${err.currentRevision}); reload`
            : err.message,
          at: err.status === 422 ? this.pending.anchors[this.pending.anchors.length - 1] : undefined,
        };
        this.pending = discardPending();  // restore prior overlay
        this.onChange();
        return false;
      }
      throw err;
    }
    this.pending = clearAfterPut();
    await this.refresh();               // post-PUT state == fresh GET
    return true;
  }

  async acceptFrame(): Promise<void> {
    const s = this.state;
    if (!this.analysis || !s.session || s.pullback === null) return;
    await this.api.putEdits(s.session, s.frame, {
      accepted: true,
      expected_revision: this.analysis.revision,
    });
    await this.refresh();
  }
}
