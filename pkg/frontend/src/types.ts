// Wire types mirroring the review service's JSON payloads.

export interface PullbackInfo {
  id: string;
  pullback_id: string;
  n_frames: number;
  n_alines: number;
  n_samples: number;
}

export interface ArcSpec {
  start: number;
  length: number;
}

export interface BoundarySpec {
  start: number;
  length: number;
  r_abluminal_px: number[];
  thickness_um: number[];
  anchors: [number, number][];
}

export interface Measurements {
  lipid_angle_deg: number;
  min_thickness_um: number;
  mean_thickness_um: number;
  tcfa: boolean;
}

export interface Overlays {
  lumen: [number, number][];
  cap: { start: number; length: number; points: [number, number][] }[];
}

export interface FrameAnalysis {
  frame_index: number;
  failed: boolean;
  view: "polar" | "cartesian";
  revision: number;
  accepted: boolean;
  arcs: ArcSpec[];
  boundaries: BoundarySpec[];
  measurements: Measurements | null;
  thickness_map_row: (number | null)[];
  overlays?: Overlays;
}

export interface EditBody {
  arcs?: ArcSpec[] | "delete-all";
  anchors?: [number, number][];
  accepted?: boolean;
  expected_revision: number;
}

export interface EditResponse {
  revision: number;
  measurements: Measurements | null;
  arcs: ArcSpec[];
}

export interface AgreementEntry {
  n: number;
  pairs: [number, number, number][]; // [a, b, frame_index]
  bias?: number;
  sd_diff?: number;
  loa_low?: number;
  loa_high?: number;
  r2?: number | null;
  slope?: number | null;
  intercept?: number | null;
}

export interface CompareResponse {
  a: string;
  b: string;
  direction: string;
  measurements: {
    lipid_angle_deg: AgreementEntry;
    min_thickness_um: AgreementEntry;
  };
}

export interface ApiError {
  status: number;
  detail: string;
  currentRevision?: number;
}
