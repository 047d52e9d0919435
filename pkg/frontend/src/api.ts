// Typed client for the review service. This module is the only place the UI
// talks to the network; everything displayed downstream originates here.

import type {
  CompareResponse, EditBody, EditResponse, FrameAnalysis, PullbackInfo,
} from "./types.js";

export interface ApiClient {
  listPullbacks(): Promise<PullbackInfo[]>;
  frameImageUrl(pid: string, frame: number, view: string): string;
  getAnalysis(pid: string, frame: number, session: string | null, view: string): Promise<FrameAnalysis>;
  createSession(analystId: string, pid: string): Promise<string>;
  putEdits(sid: string, frame: number, body: EditBody): Promise<EditResponse>;
  compare(a: string, b: string): Promise<CompareResponse>;
}

export class ServiceError extends Error {
  status: number;
  currentRevision?: number;

  constructor(status: number, detail: string, currentRevision?: number) {
    super(detail);
    this.status = status;
    this.currentRevision = currentRevision;
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    let currentRevision: number | undefined;
    try {
      const body = await resp.json();
      detail = body.detail ?? detail;
      currentRevision = body.current_revision;
    } catch {
      /* non-JSON error body */
    }
    throw new ServiceError(resp.status, detail, currentRevision);
  }
  return (await resp.json()) as T;
}

export class HttpApiClient implements ApiClient {
  base: string;

  constructor(base = "") {
    this.base = base;
  }

  listPullbacks(): Promise<PullbackInfo[]> {
    return fetch(`${this.base}/api/pullbacks`).then((r) => expectJson<PullbackInfo[]>(r));
  }

  frameImageUrl(pid: string, frame: number, view: string): string {
    return `${this.base}/api/pullbacks/${pid}/frames/${frame}?view=${view}`;
  }

  getAnalysis(pid: string, frame: number, session: string | null, view: string): Promise<FrameAnalysis> {
    const q = new URLSearchParams({ view });
    if (session) q.set("session", session);
    return fetch(`${this.base}/api/pullbacks/${pid}/frames/${frame}/analysis?${q}`)
      .then((r) => expectJson<FrameAnalysis>(r));
  }

  createSession(analystId: string, pid: string): Promise<string> {
    return fetch(`${this.base}/api/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ analyst_id: analystId, pullback_id: pid }),
    }).then((r) => expectJson<{ session_id: string }>(r)).then((b) => b.session_id);
  }

  putEdits(sid: string, frame: number, body: EditBody): Promise<EditResponse> {
    return fetch(`${this.base}/api/sessions/${sid}/frames/${frame}/edits`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => expectJson<EditResponse>(r));
  }

  compare(a: string, b: string): Promise<CompareResponse> {
    const q = new URLSearchParams({ a, b });
    return fetch(`${this.base}/api/compare?${q}`).then((r) => expectJson<CompareResponse>(r));
  }
}
