"""Preprocessing chain: lumen detection, pixel-shifting, depth crop, despeckle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.ndimage as ndi

from .model import AnalysisConfig, CalibrationMeta, LumenParams, PolarFrame


class NoLumenFound(Exception):
    """Raised when too few A-lines show a detectable lumen crossing."""


@dataclass
class LumenBoundary:
    r_lumen: np.ndarray            # fractional px per A-line
    source: str = "detected"       # "detected" | "external"

    def __post_init__(self):
        self.r_lumen = np.asarray(self.r_lumen, dtype=np.float64)
        if self.r_lumen.ndim != 1:
            raise ValueError("r_lumen must be 1-D (one entry per A-line)")
        if np.any(self.r_lumen < 0):
            raise ValueError("r_lumen must be >= 0")


@dataclass
class PreprocessedFrame:
    """Shifted/cropped/denoised tissue grid. Column 0 is the luminal surface.

    residuals[i] = shifts[i] - r_lumen[i] is the sub-pixel remainder of the
    rounding; adding it back makes thickness measurements exact.
    """

    tissue: np.ndarray
    shifts: np.ndarray
    residuals: np.ndarray
    calib: CalibrationMeta
    frame_index: int = 0
    lumen: Optional[LumenBoundary] = None

    @property
    def n_alines(self) -> int:
        return self.tissue.shape[0]


def otsu_threshold(values: np.ndarray, nbins: int = 256) -> float:
    """Otsu's threshold with the argmax plateau resolved at its midpoint.

    Bin edges span [min, max], so a global intensity scaling k > 0 scales the
    returned threshold by exactly k.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        raise ValueError("degenerate data: all values equal")
    hist, edges = np.histogram(v, bins=nbins, range=(lo, hi))
    p = hist.astype(np.float64) / hist.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(p)
    w1 = 1.0 - w0
    mu0 = np.cumsum(p * centers)
    mu_t = mu0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        m0 = mu0 / w0
        m1 = (mu_t - mu0) / w1
        sigma_b = w0 * w1 * (m0 - m1) ** 2
    sigma_b = np.nan_to_num(sigma_b[:-1], nan=-1.0)
    best = sigma_b.max()
    plateau = np.flatnonzero(sigma_b == best)
    t = plateau[(len(plateau) - 1) // 2]
    return float(edges[t + 1])


def detect_lumen(frame: PolarFrame | np.ndarray, params: LumenParams = LumenParams()) -> LumenBoundary:
    """Classical lumen detector: adaptive-threshold crossing of a radial
    running mean, then circular median smoothing across A-lines."""
    arr = frame.intensities if isinstance(frame, PolarFrame) else np.asarray(frame)
    arr = arr.astype(np.float64, copy=False)
    n_alines, n_samples = arr.shape
    dz = min(params.dead_zone_px, n_samples - 1)

    if arr.max() <= arr.min():
        raise NoLumenFound("frame has no intensity contrast")
    thr = otsu_threshold(arr)

    smoothed = ndi.uniform_filter1d(arr, size=params.mean_window_px, axis=1, mode="nearest")
    above = smoothed[:, dz:] >= thr
    has = above.any(axis=1)
    frac = has.mean()
    if frac < params.min_coverage:
        raise NoLumenFound(f"lumen crossing on only {frac:.0%} of A-lines")

    first = np.argmax(above, axis=1).astype(np.float64) + dz
    first[~has] = np.nan

    if not has.all():
        # circular linear interpolation from valid neighbors
        idx = np.arange(n_alines)
        valid = idx[has]
        ext_x = np.concatenate([valid, valid + n_alines, valid + 2 * n_alines])
        ext_y = np.tile(first[valid], 3)
        first[~has] = np.interp(idx[~has] + n_alines, ext_x, ext_y)

    r = ndi.median_filter(first, size=params.median_window_alines, mode="wrap")
    return LumenBoundary(np.clip(r, 0, n_samples - 1), source="detected")


def pixel_shift(frame: PolarFrame | np.ndarray, lumen: LumenBoundary) -> tuple[np.ndarray, np.ndarray]:
    """Shift each A-line left so that column 0 is the luminal surface.

    Returns (shifted grid, integer shifts). Right side is zero-padded.
    """
    arr = frame.intensities if isinstance(frame, PolarFrame) else np.asarray(frame)
    arr = arr.astype(np.float64, copy=False)
    n_alines, width = arr.shape
    if lumen.r_lumen.shape != (n_alines,):
        raise ValueError("lumen boundary does not match frame")
    shifts = np.floor(lumen.r_lumen + 0.5).astype(int)
    out = np.zeros_like(arr)
    for i in range(n_alines):
        s = int(shifts[i])
        if s < width:
            out[i, : width - s] = arr[i, s:]
    return out, shifts


def unshift(shifted: np.ndarray, shifts: np.ndarray, out_width: Optional[int] = None) -> np.ndarray:
    """Inverse of pixel_shift (lumen interior returns as zeros)."""
    n_alines, width = shifted.shape
    if out_width is None:
        out_width = width
    out = np.zeros((n_alines, out_width), dtype=shifted.dtype)
    for i in range(n_alines):
        s = int(shifts[i])
        if s < out_width:
            n = min(width, out_width - s)
            out[i, s:s + n] = shifted[i, :n]
    return out


def crop_depth(grid: np.ndarray, crop_depth_px: int) -> np.ndarray:
    """Keep the first crop_depth_px columns, zero-padding narrow grids."""
    if crop_depth_px <= 0:
        raise ValueError("crop_depth_px must be > 0")
    n_alines, width = grid.shape
    if width >= crop_depth_px:
        return grid[:, :crop_depth_px].copy()
    out = np.zeros((n_alines, crop_depth_px), dtype=grid.dtype)
    out[:, :width] = grid
    return out


def gaussian_kernel2d(sigma: float, footprint: tuple[int, int]) -> np.ndarray:
    """Truncated 2-D Gaussian kernel normalized to sum 1."""
    fy, fx = footprint
    if fy % 2 == 0 or fx % 2 == 0:
        raise ValueError("footprint must be odd in both dims")
    y = np.arange(fy) - fy // 2
    x = np.arange(fx) - fx // 2
    k = np.exp(-(y[:, None] ** 2 + x[None, :] ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _gaussian_kernel1d(sigma: float, size: int) -> np.ndarray:
    x = np.arange(size) - size // 2
    k = np.exp(-x ** 2 / (2.0 * sigma ** 2))
    return k / k.sum()


def denoise_gaussian(grid: np.ndarray, sigma: float = 1.0,
                     footprint: tuple[int, int] = (7, 7)) -> np.ndarray:
    """Gaussian despeckle; circular along the angular axis, replicated along r.

    Separable passes with per-axis normalized kernels are exactly the 2-D
    normalized kernel of gaussian_kernel2d.
    """
    fy, fx = footprint
    if fy % 2 == 0 or fx % 2 == 0:
        raise ValueError("footprint must be odd in both dims")
    grid = np.asarray(grid, dtype=np.float64)
    ky = _gaussian_kernel1d(sigma, fy)
    kx = _gaussian_kernel1d(sigma, fx)
    out = ndi.correlate1d(grid, ky, axis=0, mode="wrap")
    out = ndi.correlate1d(out, kx, axis=1, mode="nearest")
    return out


def preprocess_pipeline(frame: PolarFrame, config: AnalysisConfig,
                        calib: CalibrationMeta,
                        external_lumen: Optional[LumenBoundary] = None) -> PreprocessedFrame:
    """detect_lumen (unless external) -> pixel_shift -> crop -> despeckle."""
    lumen = external_lumen if external_lumen is not None else detect_lumen(frame, config.lumen)
    shifted, shifts = pixel_shift(frame, lumen)
    cropped = crop_depth(shifted, config.crop_depth_px)
    tissue = denoise_gaussian(cropped, config.gaussian_sigma_px, config.gaussian_footprint)
    residuals = shifts - lumen.r_lumen
    return PreprocessedFrame(tissue=tissue, shifts=shifts, residuals=residuals,
                             calib=calib, frame_index=frame.frame_index, lumen=lumen)
