"""Bit-exact file formats: pullback container, annotation/result documents,
metrics documents, and thickness-map rendering.

All writers are deterministic: canonical JSON uses sorted keys and 6
significant digits for floats, PNG encoding carries no timestamps, and every
write is atomic (temp file + rename).
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .model import CalibrationMeta, PolarFrame, Pullback

SCHEMA_VERSION = "1"


class MissingManifest(Exception):
    pass


class UnsupportedVersion(Exception):
    pass


class DimensionMismatch(Exception):
    pass


class SchemaViolation(Exception):
    """A document field violates its schema; the message names the field."""


# ---------------------------------------------------------------------------
# canonical JSON

def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canon(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if not np.isfinite(f):
            raise ValueError("non-finite float in document")
        return float(f"{f:.6g}")
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_canon(obj), sort_keys=True, separators=(",", ":"),
                      allow_nan=False) + "\n"


def jsonable(obj):
    """Convert numpy scalars/arrays and round floats as the writers do."""
    return _canon(obj)


def write_json_atomic(path: str | Path, obj) -> None:
    write_bytes_atomic(path, canonical_json(obj).encode())


def write_bytes_atomic(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path: str | Path) -> dict:
    with open(path, "r") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# pullback container

def write_pullback(pullback: Pullback, out_dir: str | Path, frame_format: str = "png") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    calib = pullback.calib
    n0, w0 = pullback.frames[0].intensities.shape
    pattern = "frame_{index:04d}." + ("png" if frame_format == "png" else "raw")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "id": pullback.id,
        "n_frames": pullback.n_frames,
        "n_alines": n0,
        "n_samples": w0,
        "bit_depth": calib.bit_depth,
        "radial_px_per_mm": calib.radial_px_per_mm,
        "frame_pitch_mm": calib.frame_pitch_mm,
        "axial_resolution_um": calib.axial_resolution_um,
        "frame_format": frame_format,
        "frame_pattern": pattern,
    }
    dtype = np.uint16 if calib.bit_depth == 16 else np.uint8
    for frame in pullback.frames:
        arr = frame.intensities.astype(dtype)
        fname = out_dir / pattern.format(index=frame.frame_index)
        if frame_format == "png":
            import io
            buf = io.BytesIO()
            Image.fromarray(arr).save(buf, format="PNG")
            write_bytes_atomic(fname, buf.getvalue())
        elif frame_format == "raw":
            write_bytes_atomic(fname, arr.astype("<u2" if calib.bit_depth == 16 else "u1").tobytes())
        else:
            raise ValueError(f"unknown frame_format {frame_format!r}")
    write_json_atomic(out_dir / "manifest.json", manifest)


def read_pullback(path: str | Path) -> Pullback:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.exists():
        raise MissingManifest(f"no manifest.json in {path}")
    m = read_json(mpath)
    if m.get("schema_version") != SCHEMA_VERSION:
        raise UnsupportedVersion(f"schema_version {m.get('schema_version')!r}")
    for key in ("id", "n_frames", "n_alines", "n_samples", "bit_depth",
                "radial_px_per_mm", "frame_pitch_mm", "frame_format", "frame_pattern"):
        if key not in m:
            raise SchemaViolation(f"manifest missing field '{key}'")
    calib = CalibrationMeta(radial_px_per_mm=m["radial_px_per_mm"],
                            n_alines=m["n_alines"],
                            frame_pitch_mm=m["frame_pitch_mm"],
                            bit_depth=m["bit_depth"],
                            axial_resolution_um=m.get("axial_resolution_um", 20.0))
    shape = (m["n_alines"], m["n_samples"])
    frames = []
    for k in range(m["n_frames"]):
        fname = path / m["frame_pattern"].format(index=k)
        if not fname.exists():
            raise DimensionMismatch(f"manifest names {m['n_frames']} frames; missing {fname.name}")
        if m["frame_format"] == "png":
            arr = np.array(Image.open(fname))
        else:
            dt = "<u2" if m["bit_depth"] == 16 else "u1"
            arr = np.frombuffer(fname.read_bytes(), dtype=dt).reshape(shape)
        if arr.shape != shape:
            raise DimensionMismatch(f"{fname.name} has shape {arr.shape}, expected {shape}")
        frames.append(PolarFrame(arr, frame_index=k))
    return Pullback(id=m["id"], frames=frames, calib=calib)


# ---------------------------------------------------------------------------
# run-length masks

def encode_mask_rle(mask: np.ndarray) -> dict:
    mask = np.asarray(mask, dtype=bool)
    runs = []
    for row in range(mask.shape[0]):
        padded = np.concatenate([[False], mask[row], [False]]).astype(np.int8)
        d = np.diff(padded)
        for s, e in zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)):
            runs.append([row, int(s), int(e - s)])
    return {"shape": [int(mask.shape[0]), int(mask.shape[1])], "runs": runs}


def decode_mask_rle(doc: dict) -> np.ndarray:
    shape = tuple(doc["shape"])
    mask = np.zeros(shape, dtype=bool)
    for row, start, length in doc["runs"]:
        if not (0 <= row < shape[0] and 0 <= start and start + length <= shape[1]):
            raise SchemaViolation(f"mask run {[row, start, length]} outside shape {shape}")
        mask[row, start:start + length] = True
    return mask


# ---------------------------------------------------------------------------
# annotation documents

def _check_runs(entries, n_alines: int, field: str):
    for e in entries:
        if not isinstance(e, dict) or "start" not in e or "length" not in e:
            raise SchemaViolation(f"{field}: entries need start and length")
        if not (0 <= e["start"] < n_alines):
            raise SchemaViolation(f"{field}.start {e['start']} out of range")
        if not (1 <= e["length"] <= n_alines):
            raise SchemaViolation(f"{field}.length {e['length']} out of range")


def validate_annotation(doc: dict, n_alines: Optional[int] = None,
                        n_frames: Optional[int] = None) -> None:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise UnsupportedVersion(f"schema_version {doc.get('schema_version')!r}")
    if doc.get("kind") != "annotation":
        raise SchemaViolation("kind must be 'annotation'")
    frames = doc.get("frames")
    if not isinstance(frames, dict):
        raise SchemaViolation("frames must be a mapping")
    for key, entry in frames.items():
        k = int(key)
        if n_frames is not None and not 0 <= k < n_frames:
            raise SchemaViolation(f"frames[{key}] outside pullback")
        if "arcs" in entry and "mask_rle" in entry:
            raise SchemaViolation(f"frames[{key}]: at most one of arcs and mask_rle")
        if n_alines is not None:
            if "arcs" in entry:
                _check_runs(entry["arcs"], n_alines, f"frames[{key}].arcs")
            if "guidewire" in entry:
                _check_runs(entry["guidewire"], n_alines, f"frames[{key}].guidewire")
            if "abluminal" in entry:
                _check_runs(entry["abluminal"], n_alines, f"frames[{key}].abluminal")
                for b in entry["abluminal"]:
                    if len(b.get("r_px", [])) != b["length"]:
                        raise SchemaViolation(
                            f"frames[{key}].abluminal.r_px length != arc length")
            if "lumen_r_px" in entry and len(entry["lumen_r_px"]) != n_alines:
                raise SchemaViolation(f"frames[{key}].lumen_r_px wrong length")


def read_annotation(path: str | Path, n_alines: Optional[int] = None,
                    n_frames: Optional[int] = None) -> dict:
    doc = read_json(path)
    validate_annotation(doc, n_alines=n_alines, n_frames=n_frames)
    return doc


def write_annotation(path: str | Path, doc: dict) -> None:
    validate_annotation(doc)
    write_json_atomic(path, doc)


# ---------------------------------------------------------------------------
# results documents

def validate_results(doc: dict) -> None:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise UnsupportedVersion(f"schema_version {doc.get('schema_version')!r}")
    if doc.get("kind") != "results":
        raise SchemaViolation("kind must be 'results'")
    for field in ("pullback_id", "config", "frames", "summary"):
        if field not in doc:
            raise SchemaViolation(f"missing field '{field}'")
    cfg = doc["config"]
    thr = cfg["tcfa_thickness_um"] * (1.0 + cfg.get("shrinkage_adjust_pct", 0.0) / 100.0)
    min_angle = cfg["tcfa_min_angle_deg"]
    for f in doc["frames"]:
        k = f.get("frame_index")
        m = f.get("measurements")
        for b in f.get("boundaries", []):
            for j, t in enumerate(b.get("thickness_um", [])):
                if t < 0:
                    raise SchemaViolation(
                        f"frames[{k}].boundaries.thickness_um[{j}] is negative")
        if m is None:
            continue
        if m["min_thickness_um"] < 0:
            raise SchemaViolation(f"frames[{k}].measurements.min_thickness_um is negative")
        if m["min_thickness_um"] > m["mean_thickness_um"] + 1e-9:
            raise SchemaViolation(f"frames[{k}].measurements: min exceeds mean")
        want = bool(m["min_thickness_um"] < thr and m["lipid_angle_deg"] >= min_angle)
        if bool(m["tcfa"]) != want:
            raise SchemaViolation(f"frames[{k}].measurements.tcfa inconsistent with config")


def read_results(path: str | Path) -> dict:
    doc = read_json(path)
    validate_results(doc)
    return doc


def read_results_str(text: str | bytes) -> dict:
    if isinstance(text, bytes):
        text = text.decode()
    doc = json.loads(text)
    validate_results(doc)
    return doc


def write_results(path: str | Path, doc: dict) -> None:
    validate_results(doc)
    write_json_atomic(path, doc)


# ---------------------------------------------------------------------------
# thickness-map rendering

def _viridis_lut() -> np.ndarray:
    from matplotlib import colormaps
    return (colormaps["viridis"](np.linspace(0.0, 1.0, 256))[:, :3] * 255).astype(np.uint8)

_SENTINEL_GRAY = (128, 128, 128)


def render_thickness_map(values: np.ndarray, range_um: tuple[float, float] = (0.0, 300.0),
                         out_path: Optional[str | Path] = None) -> np.ndarray:
    """Render a [n_frames x angle_bins] map to an RGB image, one pixel per
    cell: rows are angle bins, columns frames, plus a color-bar strip.

    Values clamp to range_um; NaN cells render neutral gray.
    """
    lo, hi = range_um
    if not lo < hi:
        raise ValueError("range low must be < high")
    values = np.asarray(values, dtype=np.float64)
    n_frames, bins = values.shape
    lut = _viridis_lut()

    cells = values.T  # rows = angle bins, cols = frames
    rgb = np.zeros((bins, n_frames, 3), dtype=np.uint8)
    nanmask = np.isnan(cells)
    scaled = np.zeros_like(cells)
    valid = ~nanmask
    scaled[valid] = np.clip((cells[valid] - lo) / (hi - lo), 0.0, 1.0)
    idx = np.round(scaled * 255).astype(int)
    rgb[valid] = lut[idx[valid]]
    rgb[nanmask] = _SENTINEL_GRAY

    bar = lut[np.round(np.linspace(255, 0, bins)).astype(int)]
    bar = np.repeat(bar[:, None, :], 12, axis=1)
    sep = np.zeros((bins, 2, 3), dtype=np.uint8)
    img = np.concatenate([rgb, sep, bar], axis=1)

    if out_path is not None:
        import io
        buf = io.BytesIO()
        Image.fromarray(img).save(buf, format="PNG")
        write_bytes_atomic(out_path, buf.getvalue())
    return img
