"""Abluminal cap boundary extraction by dynamic programming, and cap metrics.

The boundary between the bright fibrous cap and the dark lipid pool is found
as the path of maximum cumulative edge strength through a bright-to-dark
gradient map, one radial position per A-line of the lipid arc, under a hard
smoothness constraint. Analyst anchors are hard waypoints: the path must pass
through them and the optimum is re-solved around them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.ndimage as ndi

from .model import AnalysisConfig, CalibrationMeta, DpParams, px_to_um
from .lipid import LipidArc
from .preprocess import PreprocessedFrame


class InfeasibleAnchors(Exception):
    """Anchor spacing violates the smoothness reachability bound."""


class EmptyArc(Exception):
    """No thickness samples to aggregate."""


@dataclass
class GradientMap:
    g: np.ndarray  # [n_alines x depth], normalized edge response

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=np.float64)
        if self.g.ndim != 2:
            raise ValueError("gradient map must be 2-D")
        if not np.all(np.isfinite(self.g)):
            raise ValueError("gradient map must be finite")


@dataclass
class CapBoundary:
    arc: LipidArc
    r_abluminal: np.ndarray                      # px per arc A-line, shifted coords
    anchors: tuple[tuple[int, int], ...] = ()    # (A-line, r) hard waypoints

    def __post_init__(self):
        self.r_abluminal = np.asarray(self.r_abluminal, dtype=np.float64)
        if self.r_abluminal.shape != (self.arc.length,):
            raise ValueError("boundary must have one radius per arc A-line")


@dataclass
class FrameMeasurements:
    lipid_angle_deg: float
    thickness_um: np.ndarray
    min_thickness_um: float
    mean_thickness_um: float
    tcfa: bool


@dataclass
class ThicknessMap:
    """Pullback map [n_frames x angle_bins] in um; NaN marks non-lipid bins."""

    values: np.ndarray
    angle_bins: int = 360

    SENTINEL = float("nan")


def dog_kernel(sigma: float) -> np.ndarray:
    """Derivative-of-Gaussian correlation weights (support ~6 sigma + 1),
    signed so that intensity decreasing along +r gives a positive response."""
    radius = max(1, int(round(3.0 * sigma)))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    return -k * np.exp(-k ** 2 / (2.0 * sigma ** 2)) / sigma ** 2


def gradient_map(pre: PreprocessedFrame | np.ndarray, sigma_r: float = 2.0) -> GradientMap:
    """Per-A-line bright-to-dark edge response, normalized by the frame's
    99th-percentile absolute response."""
    tissue = pre.tissue if isinstance(pre, PreprocessedFrame) else np.asarray(pre)
    tissue = tissue.astype(np.float64, copy=False)
    resp = ndi.correlate1d(tissue, dog_kernel(sigma_r), axis=1, mode="nearest")
    p99 = float(np.percentile(np.abs(resp), 99))
    if p99 > 0:
        resp = resp / p99
    return GradientMap(resp)


def _check_anchor_feasibility(positions: list[int], radii: list[int],
                              length: int, lo: int, hi: int, smooth: int) -> None:
    for (p, r) in zip(positions, radii):
        if not 0 <= p < length:
            raise InfeasibleAnchors(f"anchor A-line position {p} outside the arc")
        if not lo <= r <= hi:
            raise InfeasibleAnchors(f"anchor radius {r} outside band [{lo}, {hi}]")
    for (p0, r0), (p1, r1) in zip(zip(positions, radii), zip(positions[1:], radii[1:])):
        if p1 == p0 and r1 != r0:
            raise InfeasibleAnchors(f"conflicting anchors at arc position {p0}")
        if abs(r1 - r0) > smooth * (p1 - p0):
            raise InfeasibleAnchors(
                f"anchors ({p0},{r0}) and ({p1},{r1}) unreachable with |dr| <= {smooth}")


def dp_abluminal(g: GradientMap | np.ndarray, arc: LipidArc,
                 params: DpParams = DpParams(),
                 anchors: Sequence[tuple[int, int]] = ()) -> CapBoundary:
    """Maximum cumulative edge strength path along the arc.

    States are radial offsets in [min_offset, max_offset]; consecutive
    A-lines may differ by at most smooth_max px. Ties break toward smaller r
    at every backtrack step, so results are deterministic. Anchors (A-line,
    r) pin the path; segments between anchors stay image-driven.
    """
    grid = g.g if isinstance(g, GradientMap) else np.asarray(g, dtype=np.float64)
    depth = grid.shape[1]
    lo = params.min_offset_px
    hi = min(params.max_offset_px, depth - 1)
    if lo > hi:
        raise ValueError("offset band is empty for this grid depth")
    smooth = params.smooth_max_px
    length = arc.length
    alines = arc.alines()

    anchor_list = sorted(
        ((int((a - arc.start) % arc.n_alines), int(r)) for a, r in anchors))
    positions = [p for p, _ in anchor_list]
    radii = [r for _, r in anchor_list]
    _check_anchor_feasibility(positions, radii, length, lo, hi, smooth)
    anchor_at = dict(anchor_list)

    n_states = hi - lo + 1
    scores = grid[alines][:, lo:hi + 1]

    def mask_anchor(row: np.ndarray, j: int) -> np.ndarray:
        if j in anchor_at:
            masked = np.full_like(row, -np.inf)
            k = anchor_at[j] - lo
            masked[k] = row[k]
            return masked
        return row

    dp = mask_anchor(scores[0].copy(), 0)
    preds = np.zeros((length, n_states), dtype=np.int32)
    for j in range(1, length):
        best = np.full(n_states, -np.inf)
        pred = np.zeros(n_states, dtype=np.int32)
        for d in range(-smooth, smooth + 1):
            # candidate predecessor k+d for state k; ascending d keeps the
            # smallest maximizing r' on ties
            cand = np.full(n_states, -np.inf)
            if d < 0:
                cand[-d:] = dp[:d]
            elif d > 0:
                cand[:-d] = dp[d:]
            else:
                cand[:] = dp
            better = cand > best
            best[better] = cand[better]
            pred[better] = np.arange(n_states)[better] + d
        dp = mask_anchor(scores[j] + best, j)
        preds[j] = pred

    end = int(np.argmax(dp))  # first occurrence = smallest r on ties
    if not np.isfinite(dp[end]):
        raise InfeasibleAnchors("no admissible path satisfies the anchors")
    path = np.empty(length, dtype=np.int64)
    path[-1] = end
    for j in range(length - 1, 0, -1):
        path[j - 1] = preds[j][path[j]]
    kept = tuple((int(alines[p]), int(r)) for p, r in anchor_list)
    return CapBoundary(arc=arc, r_abluminal=path + lo, anchors=kept)


def path_score(g: GradientMap | np.ndarray, arc: LipidArc, path_r: np.ndarray) -> float:
    """Cumulative edge strength of a path (left-fold order, matching the DP)."""
    grid = g.g if isinstance(g, GradientMap) else np.asarray(g, dtype=np.float64)
    alines = arc.alines()
    total = 0.0
    for j in range(arc.length):
        total = float(grid[alines[j], int(path_r[j])]) + total
    return total


def cap_thickness(boundary: CapBoundary, calib: CalibrationMeta,
                  residuals: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-A-line cap thickness in um, measured along the A-line ray.

    residuals are the sub-pixel lumen remainders recorded by pixel-shifting;
    adding them undoes the rounding so the distance is exact.
    """
    r = boundary.r_abluminal.astype(np.float64)
    if residuals is not None:
        res = np.asarray(residuals, dtype=np.float64)[boundary.arc.alines()]
        r = r + res
    return px_to_um(r, calib)


def cap_stats(thicknesses: np.ndarray, lipid_angle_deg: float,
              config: AnalysisConfig) -> FrameMeasurements:
    """Aggregate thickness statistics and the TCFA flag for one frame."""
    t = np.asarray(thicknesses, dtype=np.float64)
    if t.size == 0:
        raise EmptyArc("no thickness samples")
    mn = float(t.min())
    mean = float(t.mean())
    tcfa = (mn < config.tcfa_threshold_um_adjusted) and \
           (lipid_angle_deg >= config.tcfa_min_angle_deg)
    return FrameMeasurements(lipid_angle_deg=float(lipid_angle_deg), thickness_um=t,
                             min_thickness_um=mn, mean_thickness_um=mean, tcfa=tcfa)


def thickness_map(per_frame: Sequence[Sequence[tuple[LipidArc, np.ndarray]]],
                  n_alines: int, angle_bins: int = 360) -> ThicknessMap:
    """Accumulate per-A-line thickness into (frame, angle bin) cells.

    Bins sharing several A-lines take the mean; bins with no lipid hold NaN.
    """
    n_frames = len(per_frame)
    total = np.zeros((n_frames, angle_bins))
    count = np.zeros((n_frames, angle_bins))
    for z, arcs in enumerate(per_frame):
        for arc, thick in arcs:
            if arc.n_alines != n_alines:
                raise ValueError("frames must share n_alines")
            bins = (arc.alines() * angle_bins) // n_alines
            np.add.at(total[z], bins, np.asarray(thick, dtype=np.float64))
            np.add.at(count[z], bins, 1.0)
    with np.errstate(invalid="ignore"):
        values = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return ThicknessMap(values=values, angle_bins=angle_bins)
