"""Shared domain types, calibration arithmetic, and polar/Cartesian geometry."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class CalibrationMeta:
    """Acquisition calibration for one pullback.

    Defaults follow a 5 um/px radial sampling (200 px/mm) and a
    36 mm/s pullback imaged at 180 fps (0.2 mm frame pitch).
    """

    radial_px_per_mm: float = 200.0
    n_alines: int = 504
    frame_pitch_mm: float = 0.2
    bit_depth: int = 16
    axial_resolution_um: float = 20.0

    def __post_init__(self):
        if self.radial_px_per_mm <= 0:
            raise ValueError("radial_px_per_mm must be > 0")
        if self.n_alines < 8:
            raise ValueError("n_alines must be >= 8")
        if self.frame_pitch_mm <= 0:
            raise ValueError("frame_pitch_mm must be > 0")
        if self.bit_depth not in (8, 16):
            raise ValueError("bit_depth must be 8 or 16")

    @property
    def intensity_max(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def um_per_px(self) -> float:
        return 1000.0 / self.radial_px_per_mm


@dataclass(frozen=True)
class PolarFrame:
    """One raw polar frame: row i is the A-line at angle index i."""

    intensities: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        arr = np.asarray(self.intensities)
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise ValueError("intensities must be a 2-D [n_alines x n_samples] grid")
        arr.flags.writeable = False
        object.__setattr__(self, "intensities", arr)

    @property
    def n_alines(self) -> int:
        return self.intensities.shape[0]

    @property
    def n_samples(self) -> int:
        return self.intensities.shape[1]


@dataclass
class Pullback:
    """Ordered frame stack plus calibration."""

    id: str
    frames: list[PolarFrame]
    calib: CalibrationMeta

    def __post_init__(self):
        if not self.frames:
            raise ValueError("pullback has no frames")
        shape = self.frames[0].intensities.shape
        for k, f in enumerate(self.frames):
            if f.intensities.shape != shape:
                raise ValueError(f"frame {k} shape {f.intensities.shape} != {shape}")
            if f.frame_index != k:
                raise ValueError("frame_index must increase from 0 without gaps")
        if shape[0] != self.calib.n_alines:
            raise ValueError(
                f"calib.n_alines={self.calib.n_alines} does not match frames ({shape[0]})"
            )
        lim = self.calib.intensity_max
        for f in self.frames:
            mn, mx = float(f.intensities.min()), float(f.intensities.max())
            if mn < 0 or mx > lim:
                raise ValueError(f"frame {f.frame_index} intensities outside [0, {lim}]")

    @property
    def n_frames(self) -> int:
        return len(self.frames)


# ---------------------------------------------------------------------------
# Analysis configuration

@dataclass(frozen=True)
class LumenParams:
    dead_zone_px: int = 8          # catheter sheath reflections ignored
    mean_window_px: int = 5
    median_window_alines: int = 15
    min_coverage: float = 0.25


@dataclass(frozen=True)
class GuidewireParams:
    # tau_frac low enough that signal-poor lipid A-lines never read as shadow
    tau_frac: float = 0.05
    min_run: int = 8
    depth_px: int = 150


@dataclass(frozen=True)
class BaselineParams:
    """Attenuation-fit lipid classifier. Thresholds calibrated on the phantom
    corpus (scripts/calibrate_baseline.py)."""

    fit_start_px: int = 10
    fit_stop_px: int = 150
    proximal_start_px: int = 10
    proximal_stop_px: int = 60
    distal_start_px: int = 150
    distal_stop_px: int = 300
    atten_min_per_mm: float = 3.5
    distal_ratio_max: float = 0.10


@dataclass(frozen=True)
class ArcParams:
    min_pixels: int = 1
    bridge_max: int = 5
    min_width: int = 5


@dataclass(frozen=True)
class DpParams:
    sigma_r_px: float = 2.0
    min_offset_px: int = 6         # 30 um: below system resolution
    max_offset_px: int = 299
    smooth_max_px: int = 2


@dataclass(frozen=True)
class AnalysisConfig:
    crop_depth_px: int = 300
    gaussian_sigma_px: float = 1.0
    gaussian_footprint: tuple[int, int] = (7, 7)
    ribbon_width_px: int = 20
    ribbon_offset_px: int = 50
    tcfa_thickness_um: float = 65.0
    tcfa_min_angle_deg: float = 90.0
    shrinkage_adjust_pct: float = 0.0
    angle_bins: int = 360
    lumen: LumenParams = field(default_factory=LumenParams)
    guidewire: GuidewireParams = field(default_factory=GuidewireParams)
    baseline: BaselineParams = field(default_factory=BaselineParams)
    arcs: ArcParams = field(default_factory=ArcParams)
    dp: DpParams = field(default_factory=DpParams)

    def __post_init__(self):
        for name in ("crop_depth_px", "gaussian_sigma_px", "ribbon_width_px",
                     "ribbon_offset_px", "tcfa_thickness_um", "tcfa_min_angle_deg",
                     "angle_bins"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.shrinkage_adjust_pct < 0:
            raise ValueError("shrinkage_adjust_pct must be >= 0")
        fy, fx = self.gaussian_footprint
        if fy % 2 == 0 or fx % 2 == 0 or fy < 1 or fx < 1:
            raise ValueError("gaussian_footprint must be odd in both dims")

    @property
    def tcfa_threshold_um_adjusted(self) -> float:
        return self.tcfa_thickness_um * (1.0 + self.shrinkage_adjust_pct / 100.0)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "AnalysisConfig":
        d = dict(d)
        groups = {"lumen": LumenParams, "guidewire": GuidewireParams,
                  "baseline": BaselineParams, "arcs": ArcParams, "dp": DpParams}
        for key, cls in groups.items():
            if key in d and isinstance(d[key], dict):
                d[key] = cls(**d[key])
        if "gaussian_footprint" in d:
            d["gaussian_footprint"] = tuple(d["gaussian_footprint"])
        return AnalysisConfig(**d)

    def with_overrides(self, overrides: dict[str, str]) -> "AnalysisConfig":
        """Apply dotted-key string overrides, e.g. {"dp.smooth_max_px": "3"}."""
        d = self.to_dict()
        for key, raw in overrides.items():
            parts = key.split(".")
            node = d
            for p in parts[:-1]:
                if p not in node:
                    raise KeyError(f"unknown config group '{p}' in '{key}'")
                node = node[p]
            leaf = parts[-1]
            if leaf not in node:
                raise KeyError(f"unknown config key '{key}'")
            cur = node[leaf]
            if isinstance(cur, bool):
                node[leaf] = raw.lower() in ("1", "true", "yes")
            elif isinstance(cur, int):
                node[leaf] = int(raw)
            elif isinstance(cur, float):
                node[leaf] = float(raw)
            elif isinstance(cur, (tuple, list)):
                node[leaf] = tuple(int(v) for v in raw.split(","))
            else:
                node[leaf] = raw
        return AnalysisConfig.from_dict(d)


# ---------------------------------------------------------------------------
# Calibration arithmetic

def aline_angle_deg(i: int, n_alines: int) -> float:
    """Angle of A-line i about the catheter center, degrees in [0, 360)."""
    if not 0 <= i < n_alines:
        raise IndexError(f"A-line index {i} out of range [0, {n_alines})")
    return i * 360.0 / n_alines


def px_to_um(dr: float, calib: CalibrationMeta) -> float:
    """Radial pixel count to micrometers."""
    return dr * 1000.0 / calib.radial_px_per_mm


def um_to_px(um: float, calib: CalibrationMeta) -> float:
    return um * calib.radial_px_per_mm / 1000.0


# ---------------------------------------------------------------------------
# Polar <-> Cartesian geometry
#
# Convention: catheter center at the image center, angle 0 at 12 o'clock,
# increasing clockwise. Image coordinates are (x right, y down).

def _center(out_size: int) -> float:
    return (out_size - 1) / 2.0


def aline_r_to_xy(aline: np.ndarray, r: np.ndarray, n_alines: int,
                  n_samples: int, out_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Map (A-line index, radial px) to Cartesian pixel coordinates."""
    theta = np.asarray(aline, dtype=float) * (2.0 * np.pi / n_alines)
    scale = (out_size / 2.0) / n_samples
    rc = np.asarray(r, dtype=float) * scale
    c = _center(out_size)
    x = c + rc * np.sin(theta)
    y = c - rc * np.cos(theta)
    return x, y


def xy_to_aline_r(x: np.ndarray, y: np.ndarray, n_alines: int,
                  n_samples: int, out_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of aline_r_to_xy; returns fractional A-line index and radius."""
    c = _center(out_size)
    dx = np.asarray(x, dtype=float) - c
    dy = np.asarray(y, dtype=float) - c
    theta = np.mod(np.arctan2(dx, -dy), 2.0 * np.pi)
    aline = theta * n_alines / (2.0 * np.pi)
    scale = (out_size / 2.0) / n_samples
    r = np.hypot(dx, dy) / scale
    return aline, r


def scan_convert(frame: PolarFrame | np.ndarray, out_size: int,
                 lumen_offsets: Optional[Sequence[int]] = None) -> np.ndarray:
    """Resample a polar grid onto a square Cartesian image (bilinear).

    With lumen_offsets (per-A-line integer shifts from pixel-shifting), the
    grid is first placed back at acquisition radii, so shifted tissue renders
    at its true location.
    """
    if out_size < 64:
        raise ValueError("out_size must be >= 64")
    grid = frame.intensities if isinstance(frame, PolarFrame) else np.asarray(frame)
    grid = grid.astype(np.float64, copy=False)
    n_alines, width = grid.shape

    if lumen_offsets is not None:
        offs = np.asarray(lumen_offsets, dtype=int)
        if offs.shape != (n_alines,):
            raise ValueError("lumen_offsets must have one entry per A-line")
        n_samples = int(width + offs.max())
        full = np.zeros((n_alines, n_samples), dtype=np.float64)
        for i in range(n_alines):
            s = int(offs[i])
            full[i, s:s + width] = grid[i]
        grid = full
    n_samples = grid.shape[1]

    yy, xx = np.mgrid[0:out_size, 0:out_size]
    aline, r = xy_to_aline_r(xx, yy, n_alines, n_samples, out_size)

    inside = r <= (n_samples - 1)
    i0 = np.floor(aline).astype(int) % n_alines
    i1 = (i0 + 1) % n_alines
    fa = aline - np.floor(aline)
    r0 = np.clip(np.floor(r).astype(int), 0, n_samples - 1)
    r1 = np.clip(r0 + 1, 0, n_samples - 1)
    fr = np.clip(r - r0, 0.0, 1.0)

    v = ((1 - fa) * (1 - fr) * grid[i0, r0]
         + (1 - fa) * fr * grid[i0, r1]
         + fa * (1 - fr) * grid[i1, r0]
         + fa * fr * grid[i1, r1])
    v[~inside] = 0.0
    return v


def polar_resample(cart: np.ndarray, n_alines: int, n_samples: int) -> np.ndarray:
    """Sample a Cartesian image back onto the polar (A-line, radius) grid."""
    cart = np.asarray(cart, dtype=np.float64)
    out_size = cart.shape[0]
    ii, rr = np.mgrid[0:n_alines, 0:n_samples]
    x, y = aline_r_to_xy(ii, rr, n_alines, n_samples, out_size)
    x0 = np.clip(np.floor(x).astype(int), 0, out_size - 1)
    y0 = np.clip(np.floor(y).astype(int), 0, out_size - 1)
    x1 = np.clip(x0 + 1, 0, out_size - 1)
    y1 = np.clip(y0 + 1, 0, out_size - 1)
    fx = np.clip(x - x0, 0.0, 1.0)
    fy = np.clip(y - y0, 0.0, 1.0)
    return ((1 - fy) * (1 - fx) * cart[y0, x0]
            + (1 - fy) * fx * cart[y0, x1]
            + fy * (1 - fx) * cart[y1, x0]
            + fy * fx * cart[y1, x1])
