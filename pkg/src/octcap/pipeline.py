"""Per-frame analysis orchestration shared by the CLI and the review service."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import store
from .capseg import (CapBoundary, FrameMeasurements, cap_stats, cap_thickness,
                     dp_abluminal, gradient_map, thickness_map)
from .lipid import (ALineLabels, LipidArc, baseline_classify, detect_guidewire,
                    extract_arcs, labels_from_mask, lipid_angle)
from .metrics import agreement_stats, aline_confusion, classification_scores
from .model import AnalysisConfig, CalibrationMeta, PolarFrame, Pullback
from .preprocess import (LumenBoundary, NoLumenFound, PreprocessedFrame,
                         preprocess_pipeline)


@dataclass
class FrameResult:
    frame_index: int
    failed: bool = False
    error: Optional[str] = None
    lumen: Optional[LumenBoundary] = None
    labels: Optional[ALineLabels] = None
    arcs: list[LipidArc] = field(default_factory=list)
    boundaries: list[CapBoundary] = field(default_factory=list)
    thicknesses: list[np.ndarray] = field(default_factory=list)
    measurements: Optional[FrameMeasurements] = None
    timings_s: dict[str, float] = field(default_factory=dict)


@dataclass
class PullbackAnalysis:
    pullback_id: str
    calib: CalibrationMeta
    config: AnalysisConfig
    results: list[FrameResult]

    @property
    def n_failed(self) -> int:
        return sum(r.failed for r in self.results)


def labels_from_annotation_entry(entry: dict, n_alines: int,
                                 config: AnalysisConfig,
                                 pre: Optional[PreprocessedFrame]) -> ALineLabels:
    """Build per-A-line labels from an annotation frame entry (arcs or mask).

    Guidewire A-lines come from the entry when present, otherwise from the
    shadow detector; they always clear the lipid flag.
    """
    lipid = np.zeros(n_alines, dtype=bool)
    if entry:
        if "arcs" in entry:
            for a in entry["arcs"]:
                idx = (a["start"] + np.arange(a["length"])) % n_alines
                lipid[idx] = True
        elif "mask_rle" in entry:
            mask = store.decode_mask_rle(entry["mask_rle"])
            lipid = labels_from_mask(mask, config.arcs.min_pixels).lipid
    gw = np.zeros(n_alines, dtype=bool)
    if entry and "guidewire" in entry:
        for a in entry["guidewire"]:
            idx = (a["start"] + np.arange(a["length"])) % n_alines
            gw[idx] = True
    elif pre is not None:
        gw = detect_guidewire(pre, config.guidewire)
    return ALineLabels(lipid=lipid & ~gw, guidewire=gw)


def external_lumen_from_entry(entry: Optional[dict]) -> Optional[LumenBoundary]:
    if entry and "lumen_r_px" in entry:
        return LumenBoundary(np.asarray(entry["lumen_r_px"], dtype=float), source="external")
    return None


def analyze_frame(frame: PolarFrame, calib: CalibrationMeta, config: AnalysisConfig,
                  annotation_entry: Optional[dict] = None,
                  use_baseline: bool = False,
                  anchors_by_arc: Optional[dict[int, list[tuple[int, int]]]] = None) -> FrameResult:
    """Run preprocess -> lipid labels -> arcs -> DP boundary -> measurements.

    Exactly one lipid source applies: the annotation entry (arcs or pixel
    mask) or the built-in baseline classifier.
    """
    res = FrameResult(frame_index=frame.frame_index)
    t0 = time.perf_counter()
    try:
        pre = preprocess_pipeline(frame, config, calib,
                                  external_lumen=external_lumen_from_entry(annotation_entry))
    except NoLumenFound as exc:
        res.failed = True
        res.error = str(exc)
        res.timings_s = {"preprocess": time.perf_counter() - t0, "lipid": 0.0, "capseg": 0.0}
        return res
    res.lumen = pre.lumen
    t1 = time.perf_counter()

    if use_baseline:
        labels = baseline_classify(pre, config.baseline, calib, config.guidewire)
    else:
        labels = labels_from_annotation_entry(annotation_entry, pre.n_alines, config, pre)
    res.labels = labels
    res.arcs = extract_arcs(labels, config.arcs.bridge_max, config.arcs.min_width)
    t2 = time.perf_counter()

    if res.arcs:
        g = gradient_map(pre, config.dp.sigma_r_px)
        for arc in res.arcs:
            anchors = (anchors_by_arc or {}).get(arc.start, [])
            b = dp_abluminal(g, arc, config.dp, anchors=anchors)
            res.boundaries.append(b)
            res.thicknesses.append(cap_thickness(b, calib, pre.residuals))
        angle = lipid_angle(res.arcs, pre.n_alines)
        res.measurements = cap_stats(np.concatenate(res.thicknesses), angle, config)
    t3 = time.perf_counter()
    res.timings_s = {"preprocess": t1 - t0, "lipid": t2 - t1, "capseg": t3 - t2}
    return res


def analyze_pullback(pullback: Pullback, config: AnalysisConfig,
                     annotation: Optional[dict] = None,
                     use_baseline: bool = False,
                     threads: Optional[int] = None) -> PullbackAnalysis:
    """Frame-parallel analysis; results are ordered by frame index so the
    output is identical for any thread count."""
    entries = (annotation or {}).get("frames", {})

    def work(frame: PolarFrame) -> FrameResult:
        return analyze_frame(frame, pullback.calib, config,
                             annotation_entry=entries.get(str(frame.frame_index)),
                             use_baseline=use_baseline)

    if threads is not None and threads <= 1:
        results = [work(f) for f in pullback.frames]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, pullback.frames))
    return PullbackAnalysis(pullback_id=pullback.id, calib=pullback.calib,
                            config=config, results=results)


def stage_medians(results: Sequence[FrameResult]) -> dict[str, float]:
    out = {}
    for stage in ("preprocess", "lipid", "capseg"):
        vals = [r.timings_s[stage] for r in results if stage in r.timings_s]
        out[stage] = float(np.median(vals)) if vals else 0.0
    vals = [sum(r.timings_s.values()) for r in results if r.timings_s]
    out["total"] = float(np.median(vals)) if vals else 0.0
    return out


# ---------------------------------------------------------------------------
# results document

def frame_entry(r: FrameResult) -> dict:
    entry: dict = {"frame_index": r.frame_index, "failed": r.failed,
                   "error": r.error}
    if r.failed:
        return entry
    entry["lumen_r_px"] = [round(float(v), 3) for v in r.lumen.r_lumen]
    entry["arcs"] = [{"start": a.start, "length": a.length} for a in r.arcs]
    entry["boundaries"] = [
        {"start": b.arc.start, "length": b.arc.length,
         "r_abluminal_px": [int(v) for v in b.r_abluminal],
         "thickness_um": [float(t) for t in thick],
         "anchors": [[int(a), int(rr)] for a, rr in b.anchors]}
        for b, thick in zip(r.boundaries, r.thicknesses)]
    if r.measurements is not None:
        m = r.measurements
        entry["measurements"] = {
            "lipid_angle_deg": m.lipid_angle_deg,
            "min_thickness_um": m.min_thickness_um,
            "mean_thickness_um": m.mean_thickness_um,
            "tcfa": m.tcfa,
        }
    else:
        entry["measurements"] = None
    return entry


def results_doc(analysis: PullbackAnalysis) -> dict:
    frames = [frame_entry(r) for r in analysis.results]
    lipid_frames = [r for r in analysis.results if r.measurements is not None]
    tcfa_frames = [r.frame_index for r in lipid_frames if r.measurements.tcfa]
    global_min = min((r.measurements.min_thickness_um for r in lipid_frames), default=None)

    lesions = []
    run: list[FrameResult] = []
    for r in analysis.results + [FrameResult(frame_index=-1)]:
        if r.measurements is not None:
            run.append(r)
        elif run:
            lesions.append({
                "frame_start": run[0].frame_index,
                "frame_stop": run[-1].frame_index + 1,
                "length_mm": len(run) * analysis.calib.frame_pitch_mm,
                "min_thickness_um": min(x.measurements.min_thickness_um for x in run),
            })
            run = []

    return {
        "schema_version": store.SCHEMA_VERSION,
        "kind": "results",
        "pullback_id": analysis.pullback_id,
        "config": analysis.config.to_dict(),
        "frames": frames,
        "summary": {
            "n_frames": len(analysis.results),
            "n_failed": analysis.n_failed,
            "n_lipid_frames": len(lipid_frames),
            "tcfa_frames": tcfa_frames,
            "global_min_thickness_um": global_min,
            "lesions": lesions,
        },
    }


def analysis_thickness_map(analysis: PullbackAnalysis, angle_bins: Optional[int] = None):
    per_frame = [list(zip(r.arcs, r.thicknesses)) for r in analysis.results]
    return thickness_map(per_frame, analysis.calib.n_alines,
                         angle_bins or analysis.config.angle_bins)


def thickness_map_from_results(doc: dict, angle_bins: int = 360):
    n_alines = None
    per_frame = []
    for f in doc["frames"]:
        pairs = []
        for b in f.get("boundaries", []):
            if n_alines is None:
                n_alines = _doc_n_alines(doc)
            arc = LipidArc(start=b["start"], length=b["length"], n_alines=n_alines)
            pairs.append((arc, np.asarray(b["thickness_um"])))
        per_frame.append(pairs)
    return thickness_map(per_frame, n_alines or _doc_n_alines(doc), angle_bins)


def _doc_n_alines(doc: dict) -> int:
    for f in doc["frames"]:
        if f.get("lumen_r_px"):
            return len(f["lumen_r_px"])
    raise ValueError("cannot infer A-line count from results document")


# ---------------------------------------------------------------------------
# evaluation and agreement over documents

def labels_from_doc_frame(entry: dict, n_alines: int) -> ALineLabels:
    lipid = np.zeros(n_alines, dtype=bool)
    for a in entry.get("arcs") or []:
        idx = (a["start"] + np.arange(a["length"])) % n_alines
        lipid[idx] = True
    if "mask_rle" in entry:
        lipid = labels_from_mask(store.decode_mask_rle(entry["mask_rle"]), 1).lipid
    gw = np.zeros(n_alines, dtype=bool)
    for a in entry.get("guidewire") or []:
        idx = (a["start"] + np.arange(a["length"])) % n_alines
        gw[idx] = True
    return ALineLabels(lipid=lipid & ~gw, guidewire=gw)


def _doc_frames_mapping(doc: dict) -> dict[int, dict]:
    if doc.get("kind") == "annotation":
        return {int(k): v for k, v in doc["frames"].items()}
    return {f["frame_index"]: f for f in doc["frames"] if not f.get("failed")}


def evaluate_docs(pred: dict, truth: dict, n_alines: int) -> dict:
    """A-line confusion metrics plus a per-frame lipid-angle table."""
    pf = _doc_frames_mapping(pred)
    tf = _doc_frames_mapping(truth)
    keys = sorted(set(pf) | set(tf))
    preds, truths, table = [], [], []
    for k in keys:
        pl = labels_from_doc_frame(pf.get(k, {}), n_alines)
        tl = labels_from_doc_frame(tf.get(k, {}), n_alines)
        preds.append(pl)
        truths.append(tl)
        table.append({"frame_index": k,
                      "pred_angle_deg": float(pl.lipid.sum()) * 360.0 / n_alines,
                      "truth_angle_deg": float(tl.lipid.sum()) * 360.0 / n_alines})
    counts = aline_confusion(preds, truths)
    scores = classification_scores(counts)
    return {
        "schema_version": store.SCHEMA_VERSION,
        "kind": "eval",
        "n_frames": len(keys),
        "counts": {"tp": counts.tp, "fp": counts.fp, "fn": counts.fn, "tn": counts.tn},
        "scores": {k: (v if v is not None else "undefined") for k, v in scores.items()},
        "per_frame": table,
    }


def paired_measurements(doc_a: dict, doc_b: dict) -> dict[str, list]:
    """Per-frame measurement pairs between two results documents.

    Lipid-angle pairs cover frames where either side detected lipid (the
    empty side counts 0 degrees); min-thickness pairs need lipid on both.
    """
    fa = {f["frame_index"]: f for f in doc_a["frames"]}
    fb = {f["frame_index"]: f for f in doc_b["frames"]}
    if sorted(fa) != sorted(fb):
        raise ValueError("results documents cover different frame sets")
    angle_pairs, thick_pairs = [], []
    for k in sorted(fa):
        ma, mb = fa[k].get("measurements"), fb[k].get("measurements")
        aa = ma["lipid_angle_deg"] if ma else 0.0
        ab = mb["lipid_angle_deg"] if mb else 0.0
        if ma or mb:
            angle_pairs.append([aa, ab, k])
        if ma and mb:
            thick_pairs.append([ma["min_thickness_um"], mb["min_thickness_um"], k])
    return {"lipid_angle_deg": angle_pairs, "min_thickness_um": thick_pairs}


def compare_results_docs(doc_a: dict, doc_b: dict) -> dict:
    """Agreement statistics (a minus b) for lipid angle and min thickness."""
    pairs = paired_measurements(doc_a, doc_b)
    out = {"schema_version": store.SCHEMA_VERSION, "kind": "compare",
           "direction": "a_minus_b", "measurements": {}}
    for name, plist in pairs.items():
        entry: dict = {"n": len(plist), "pairs": plist}
        if len(plist) >= 2:
            st = agreement_stats([(p[0], p[1]) for p in plist])
            entry.update({"bias": st.bias, "sd_diff": st.sd_diff,
                          "loa_low": st.loa_low, "loa_high": st.loa_high,
                          "r2": st.r2, "slope": st.slope, "intercept": st.intercept})
        out["measurements"][name] = entry
    return out
