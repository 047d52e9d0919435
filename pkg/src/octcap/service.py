"""Analyst review service: serves frames and overlays, accepts per-session
arc/anchor edits with live recomputation, and compares sessions.

Automated results are computed once per pullback and cached on disk; analyst
sessions are JSON overlay files that never mutate the automated results.
"""
from __future__ import annotations

import datetime
import io
import threading
import uuid
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse, Response
from PIL import Image

from . import pipeline, store
from .capseg import InfeasibleAnchors, cap_stats, cap_thickness, dp_abluminal, gradient_map
from .lipid import LipidArc, lipid_angle
from .model import AnalysisConfig, Pullback, aline_r_to_xy, scan_convert
from .preprocess import preprocess_pipeline


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


class PullbackState:
    def __init__(self, directory: Path, config: AnalysisConfig):
        self.directory = directory
        self.config = config
        self.lock = threading.Lock()
        self.pullback: Optional[Pullback] = None
        self.annotation: Optional[dict] = None
        self.analysis: Optional[pipeline.PullbackAnalysis] = None
        self.results: Optional[dict] = None          # canonical round-tripped
        self.results_bytes: Optional[bytes] = None
        self.tmap = None

    def load_pullback(self) -> Pullback:
        if self.pullback is None:
            self.pullback = store.read_pullback(self.directory)
            ann = self.directory / "annotations.json"
            if ann.exists():
                self.annotation = store.read_annotation(
                    ann, n_alines=self.pullback.calib.n_alines,
                    n_frames=self.pullback.n_frames)
        return self.pullback

    def ensure_analysis(self, auto_analyze: bool) -> None:
        with self.lock:
            if self.results is not None:
                return
            pb = self.load_pullback()
            cached = self.directory / "auto_results.json"
            if not cached.exists():
                if not auto_analyze:
                    raise HTTPException(status_code=409,
                                        detail="analysis not yet computed for this pullback")
                analysis = pipeline.analyze_pullback(
                    pb, self.config, annotation=self.annotation,
                    use_baseline=self.annotation is None)
                store.write_results(cached, pipeline.results_doc(analysis))
                self.analysis = analysis
            if self.analysis is None:
                self.analysis = pipeline.analyze_pullback(
                    pb, self.config, annotation=self.annotation,
                    use_baseline=self.annotation is None)
            self.results_bytes = cached.read_bytes()
            self.results = store.read_results(cached)
            self.tmap = pipeline.analysis_thickness_map(self.analysis)


class ServiceState:
    def __init__(self, data_root: Path, config: AnalysisConfig, auto_analyze: bool):
        self.data_root = data_root
        self.config = config
        self.auto_analyze = auto_analyze
        self.pullbacks: dict[str, PullbackState] = {}
        self.session_locks: dict[str, threading.Lock] = {}
        self.global_lock = threading.Lock()

    def pullback_dirs(self) -> dict[str, Path]:
        out = {}
        if self.data_root.exists():
            for d in sorted(self.data_root.iterdir()):
                if (d / "manifest.json").exists():
                    out[d.name] = d
        return out

    def state_for(self, pid: str) -> PullbackState:
        dirs = self.pullback_dirs()
        if pid not in dirs:
            raise HTTPException(status_code=404, detail=f"unknown pullback '{pid}'")
        with self.global_lock:
            if pid not in self.pullbacks:
                self.pullbacks[pid] = PullbackState(dirs[pid], self.config)
            return self.pullbacks[pid]

    def sessions_dir(self) -> Path:
        d = self.data_root / "sessions"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def session_path(self, sid: str) -> Path:
        return self.sessions_dir() / f"{sid}.json"

    def load_session(self, sid: str) -> dict:
        p = self.session_path(sid)
        if not p.exists():
            raise HTTPException(status_code=404, detail=f"unknown session '{sid}'")
        return store.read_json(p)

    def session_lock(self, sid: str) -> threading.Lock:
        with self.global_lock:
            if sid not in self.session_locks:
                self.session_locks[sid] = threading.Lock()
            return self.session_locks[sid]


def _validate_arcs_body(arcs, n_alines: int) -> None:
    if arcs == "delete-all":
        return
    if not isinstance(arcs, list):
        raise HTTPException(400, "arcs must be a list of {start, length} or 'delete-all'")
    covered = np.zeros(n_alines, dtype=bool)
    for a in arcs:
        if not isinstance(a, dict) or "start" not in a or "length" not in a:
            raise HTTPException(400, "each arc needs start and length")
        if not (0 <= a["start"] < n_alines and 1 <= a["length"] <= n_alines):
            raise HTTPException(400, f"arc {a} out of bounds")
        idx = (a["start"] + np.arange(a["length"])) % n_alines
        if covered[idx].any():
            raise HTTPException(400, "arcs overlap")
        covered[idx] = True


def _edit_arcs(edits: Optional[dict], auto: list[dict]) -> list[dict]:
    if edits and "arcs" in edits:
        return [] if edits["arcs"] == "delete-all" else edits["arcs"]
    return auto


def _recompute_frame(state: PullbackState, k: int, edits: Optional[dict]) -> pipeline.FrameResult:
    """Automated result for frame k with session edits applied (edits win)."""
    auto = state.analysis.results[k]
    if not edits or ("arcs" not in edits and not edits.get("anchors")):
        return auto
    if auto.failed:
        return auto
    pb = state.pullback
    config = state.config
    entry = (state.annotation or {}).get("frames", {}).get(str(k))
    pre = preprocess_pipeline(pb.frames[k], config, pb.calib,
                              external_lumen=pipeline.external_lumen_from_entry(entry))
    arcs_spec = _edit_arcs(edits, [{"start": a.start, "length": a.length} for a in auto.arcs])
    arcs = [LipidArc(start=a["start"], length=a["length"], n_alines=pb.calib.n_alines)
            for a in arcs_spec]
    anchors = [tuple(x) for x in (edits.get("anchors") or [])]
    for aline, r in anchors:
        if not any(arc.contains(int(aline)) for arc in arcs):
            raise HTTPException(400, f"anchor A-line {aline} is not inside a lipid arc")
        if not (config.dp.min_offset_px <= int(r) <= config.dp.max_offset_px):
            raise HTTPException(400, f"anchor radius {r} outside the DP band")

    res = pipeline.FrameResult(frame_index=k, lumen=pre.lumen, labels=auto.labels, arcs=arcs)
    if arcs:
        g = gradient_map(pre, config.dp.sigma_r_px)
        for arc in arcs:
            arc_anchors = [(a, r) for a, r in anchors if arc.contains(int(a))]
            try:
                b = dp_abluminal(g, arc, config.dp, anchors=arc_anchors)
            except InfeasibleAnchors as exc:
                raise HTTPException(422, f"infeasible anchors: {exc}")
            res.boundaries.append(b)
            res.thicknesses.append(cap_thickness(b, pb.calib, pre.residuals))
        angle = lipid_angle(arcs, pb.calib.n_alines)
        res.measurements = cap_stats(np.concatenate(res.thicknesses), angle, config)
    return res


def _session_results_doc(state: PullbackState, session: dict) -> dict:
    """Automated results with the session's edited frames substituted."""
    doc = {k: v for k, v in state.results.items()}
    frames = [dict(f) for f in state.results["frames"]]
    for key, edits in session.get("frames", {}).items():
        k = int(key)
        res = _recompute_frame(state, k, edits)
        frames[k] = pipeline.frame_entry(res)
    doc["frames"] = frames
    # canonical round-trip so numbers match file exports exactly
    return store.read_results_str(store.canonical_json(_rebuild_summary(doc, state)))


def _rebuild_summary(doc: dict, state: PullbackState) -> dict:
    lipid = [f for f in doc["frames"] if f.get("measurements")]
    tcfa_frames = [f["frame_index"] for f in lipid if f["measurements"]["tcfa"]]
    global_min = min((f["measurements"]["min_thickness_um"] for f in lipid), default=None)
    lesions = []
    run = []
    for f in doc["frames"] + [{"measurements": None, "frame_index": -1}]:
        if f.get("measurements"):
            run.append(f)
        elif run:
            lesions.append({
                "frame_start": run[0]["frame_index"],
                "frame_stop": run[-1]["frame_index"] + 1,
                "length_mm": len(run) * state.pullback.calib.frame_pitch_mm,
                "min_thickness_um": min(x["measurements"]["min_thickness_um"] for x in run),
            })
            run = []
    doc = dict(doc)
    doc["summary"] = dict(doc["summary"])
    doc["summary"].update({"n_lipid_frames": len(lipid), "tcfa_frames": tcfa_frames,
                           "global_min_thickness_um": global_min, "lesions": lesions})
    return doc


def _session_annotation_doc(state: PullbackState, session: dict) -> dict:
    pb = state.pullback
    n = pb.calib.n_alines
    frames: dict[str, dict] = {}
    edited = session.get("frames", {})
    for k, auto in enumerate(state.analysis.results):
        if auto.failed:
            continue
        edits = edited.get(str(k))
        res = _recompute_frame(state, k, edits) if edits else auto
        entry: dict = {"lumen_r_px": [round(float(v), 3) for v in res.lumen.r_lumen]}
        if res.arcs:
            entry["arcs"] = [{"start": a.start, "length": a.length} for a in res.arcs]
            entry["abluminal"] = [
                {"start": b.arc.start, "length": b.arc.length,
                 "r_px": [int(v) for v in b.r_abluminal]}
                for b in res.boundaries]
        if res.labels is not None and res.labels.guidewire.any():
            from .lipid import _circular_runs
            entry["guidewire"] = [{"start": int(s), "length": int(ln)}
                                  for s, ln in _circular_runs(res.labels.guidewire)]
        prov = {"source": session["analyst_id"] if edits else "auto"}
        if edits:
            prov["revision"] = edits.get("revision", 0)
        entry["provenance"] = prov
        frames[str(k)] = entry
    return {"schema_version": store.SCHEMA_VERSION, "kind": "annotation",
            "pullback_id": pb.id, "n_alines": n, "frames": frames}


def _measurements_payload(res: pipeline.FrameResult) -> Optional[dict]:
    if res.measurements is None:
        return None
    m = res.measurements
    return {"lipid_angle_deg": m.lipid_angle_deg,
            "min_thickness_um": m.min_thickness_um,
            "mean_thickness_um": m.mean_thickness_um,
            "tcfa": m.tcfa}


def _overlay_payload(state: PullbackState, res: pipeline.FrameResult, view: str) -> dict:
    pb = state.pullback
    n = pb.calib.n_alines
    n_samples = pb.frames[0].n_samples
    out_size = 2 * n_samples
    alines = np.arange(n)
    shifts = np.floor(res.lumen.r_lumen + 0.5)

    def coords(aline_idx, r_abs):
        if view == "cartesian":
            x, y = aline_r_to_xy(aline_idx, r_abs, n, n_samples, out_size)
            return [[float(a), float(b)] for a, b in zip(x, y)]
        return [[int(a), float(r)] for a, r in zip(aline_idx, r_abs)]

    overlays = {"lumen": coords(alines, res.lumen.r_lumen)}
    cap = []
    for b in res.boundaries:
        idx = b.arc.alines()
        r_abs = shifts[idx] + b.r_abluminal
        cap.append({"start": b.arc.start, "length": b.arc.length,
                    "points": coords(idx, r_abs)})
    overlays["cap"] = cap
    return overlays


def create_app(data_root: Path, config: Optional[AnalysisConfig] = None,
               auto_analyze: bool = True, frontend_dir: Optional[Path] = None) -> FastAPI:
    state = ServiceState(Path(data_root), config or AnalysisConfig(), auto_analyze)
    app = FastAPI(title="octcap review service")

    @app.get("/api/pullbacks")
    def list_pullbacks():
        out = []
        for pid, d in state.pullback_dirs().items():
            m = store.read_json(d / "manifest.json")
            out.append({"id": pid, "pullback_id": m["id"], "n_frames": m["n_frames"],
                        "n_alines": m["n_alines"], "n_samples": m["n_samples"]})
        return out

    def _frame_or_404(ps: PullbackState, k: int):
        pb = ps.load_pullback()
        if not 0 <= k < pb.n_frames:
            raise HTTPException(404, f"frame {k} out of range")
        return pb.frames[k]

    @app.get("/api/pullbacks/{pid}/frames/{k}")
    def frame_image(pid: str, k: int, view: str = Query("polar", pattern="^(polar|cartesian)$")):
        ps = state.state_for(pid)
        frame = _frame_or_404(ps, k)
        arr = frame.intensities.astype(np.float64)
        arr = (arr / ps.pullback.calib.intensity_max * 255.0)
        if view == "cartesian":
            arr = scan_convert(arr, out_size=2 * frame.n_samples)
        img = Image.fromarray(np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8))
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/api/pullbacks/{pid}/frames/{k}/analysis")
    def frame_analysis(pid: str, k: int, session: Optional[str] = None,
                       view: str = Query("polar", pattern="^(polar|cartesian)$")):
        ps = state.state_for(pid)
        _frame_or_404(ps, k)
        ps.ensure_analysis(state.auto_analyze)
        edits = None
        revision = 0
        accepted = False
        if session:
            sess = state.load_session(session)
            if sess["pullback_id"] != pid:
                raise HTTPException(400, "session belongs to a different pullback")
            edits = sess.get("frames", {}).get(str(k))
            if edits:
                revision = edits.get("revision", 0)
                accepted = bool(edits.get("accepted", False))
        res = _recompute_frame(ps, k, edits)
        row = ps.tmap.values[k]
        payload = {
            "frame_index": k,
            "failed": res.failed,
            "view": view,
            "revision": revision,
            "accepted": accepted,
            "arcs": [{"start": a.start, "length": a.length} for a in res.arcs],
            "boundaries": [] if res.failed else [
                {"start": b.arc.start, "length": b.arc.length,
                 "r_abluminal_px": [int(v) for v in b.r_abluminal],
                 "thickness_um": [float(t) for t in thick],
                 "anchors": [[int(a), int(r)] for a, r in b.anchors]}
                for b, thick in zip(res.boundaries, res.thicknesses)],
            "measurements": _measurements_payload(res),
            "thickness_map_row": [None if np.isnan(v) else float(v) for v in row],
        }
        if not res.failed:
            payload["overlays"] = _overlay_payload(ps, res, view)
        return JSONResponse(store.jsonable(payload))

    @app.post("/api/sessions")
    def create_session(body: dict):
        for fieldname in ("analyst_id", "pullback_id"):
            if not body.get(fieldname):
                raise HTTPException(400, f"missing {fieldname}")
        pid = body["pullback_id"]
        state.state_for(pid)  # 404 if unknown
        sid = uuid.uuid4().hex[:12]
        doc = {"session_id": sid, "analyst_id": body["analyst_id"], "pullback_id": pid,
               "created": _now(), "updated": _now(), "revision": 0, "frames": {}}
        store.write_json_atomic(state.session_path(sid), doc)
        return {"session_id": sid, "revision": 0}

    @app.get("/api/sessions/{sid}")
    def get_session(sid: str):
        return state.load_session(sid)

    @app.put("/api/sessions/{sid}/frames/{k}/edits")
    def put_edits(sid: str, k: int, body: dict):
        with state.session_lock(sid):
            sess = state.load_session(sid)
            ps = state.state_for(sess["pullback_id"])
            _frame_or_404(ps, k)
            ps.ensure_analysis(state.auto_analyze)
            n_alines = ps.pullback.calib.n_alines

            new_state: dict = {}
            if "arcs" in body:
                _validate_arcs_body(body["arcs"], n_alines)
                new_state["arcs"] = body["arcs"]
            if "anchors" in body:
                anchors = body["anchors"] or []
                for a in anchors:
                    if (not isinstance(a, (list, tuple))) or len(a) != 2:
                        raise HTTPException(400, "anchors must be [aline, r] pairs")
                    if not 0 <= int(a[0]) < n_alines:
                        raise HTTPException(400, f"anchor A-line {a[0]} out of range")
                new_state["anchors"] = [[int(a), int(r)] for a, r in anchors]
            if "accepted" in body:
                new_state["accepted"] = bool(body["accepted"])

            cur = sess.get("frames", {}).get(str(k))
            cur_rev = cur.get("revision", 0) if cur else 0
            cur_content = {kk: vv for kk, vv in (cur or {}).items() if kk != "revision"}

            if new_state == cur_content:
                res = _recompute_frame(ps, k, cur)  # idempotent replay, no state change
                return {"revision": cur_rev,
                        "measurements": _measurements_payload(res),
                        "arcs": [{"start": a.start, "length": a.length} for a in res.arcs]}

            expected = body.get("expected_revision", 0)
            if expected != cur_rev:
                return JSONResponse(status_code=409,
                                    content={"detail": "revision conflict",
                                             "current_revision": cur_rev})
            candidate = dict(new_state)
            candidate["revision"] = cur_rev + 1
            res = _recompute_frame(ps, k, candidate)  # may raise 400/422
            sess.setdefault("frames", {})[str(k)] = candidate
            sess["revision"] = sess.get("revision", 0) + 1
            sess["updated"] = _now()
            store.write_json_atomic(state.session_path(sid), sess)
            return {"revision": candidate["revision"],
                    "measurements": _measurements_payload(res),
                    "arcs": [{"start": a.start, "length": a.length} for a in res.arcs]}

    @app.get("/api/compare")
    def compare(a: str, b: str):
        sa = state.load_session(a)
        sb = state.load_session(b)
        if sa["pullback_id"] != sb["pullback_id"]:
            raise HTTPException(400, "sessions are on different pullbacks")
        ps = state.state_for(sa["pullback_id"])
        ps.ensure_analysis(state.auto_analyze)
        doc_a = _session_results_doc(ps, sa)
        doc_b = _session_results_doc(ps, sb)
        out = pipeline.compare_results_docs(doc_a, doc_b)
        out["a"] = a
        out["b"] = b
        return JSONResponse(store.jsonable(out))

    @app.get("/api/sessions/{sid}/export")
    def export_session(sid: str, doc: Optional[str] = None):
        sess = state.load_session(sid)
        ps = state.state_for(sess["pullback_id"])
        ps.ensure_analysis(state.auto_analyze)
        if doc == "results":
            if not sess.get("frames"):
                return Response(content=ps.results_bytes, media_type="application/json")
            rd = _session_results_doc(ps, sess)
            return Response(content=store.canonical_json(rd), media_type="application/json")
        if doc == "annotation":
            ad = _session_annotation_doc(ps, sess)
            return Response(content=store.canonical_json(ad), media_type="application/json")
        rd = (store.read_results_str(ps.results_bytes.decode()) if not sess.get("frames")
              else _session_results_doc(ps, sess))
        return JSONResponse(store.jsonable({
            "annotation": _session_annotation_doc(ps, sess), "results": rd}))

    if frontend_dir and Path(frontend_dir).exists():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app
