"""Per-A-line lipid labeling, guidewire shadow handling, and arc grouping."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import BaselineParams, CalibrationMeta, GuidewireParams
from .preprocess import PreprocessedFrame


@dataclass
class ALineLabels:
    lipid: np.ndarray      # bool per A-line
    guidewire: np.ndarray  # bool per A-line; mutually exclusive with lipid

    def __post_init__(self):
        self.lipid = np.asarray(self.lipid, dtype=bool)
        self.guidewire = np.asarray(self.guidewire, dtype=bool)
        if self.lipid.shape != self.guidewire.shape or self.lipid.ndim != 1:
            raise ValueError("lipid and guidewire must be 1-D and equally sized")
        if np.any(self.lipid & self.guidewire):
            raise ValueError("lipid and guidewire labels must be mutually exclusive")

    @property
    def n_alines(self) -> int:
        return self.lipid.shape[0]


@dataclass(frozen=True)
class LipidArc:
    """Contiguous angular lesion arc; may wrap past A-line n-1 to 0."""

    start: int
    length: int
    n_alines: int

    def __post_init__(self):
        if not 1 <= self.length <= self.n_alines:
            raise ValueError(f"arc length {self.length} outside [1, {self.n_alines}]")
        if not 0 <= self.start < self.n_alines:
            raise ValueError("arc start out of range")

    @property
    def angle_deg(self) -> float:
        return self.length * 360.0 / self.n_alines

    def alines(self) -> np.ndarray:
        """Absolute A-line indices covered by the arc, in path order."""
        return (self.start + np.arange(self.length)) % self.n_alines

    def contains(self, aline: int) -> bool:
        return ((aline - self.start) % self.n_alines) < self.length


def labels_from_mask(mask: np.ndarray, min_pixels: int = 1) -> ALineLabels:
    """A-line is lipid iff its row has >= min_pixels labeled pixels."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D [n_alines x depth]")
    counts = mask.astype(bool).sum(axis=1)
    lipid = counts >= min_pixels
    return ALineLabels(lipid=lipid, guidewire=np.zeros_like(lipid))


def ribbon_from_arc(arc: LipidArc, crop_depth_px: int,
                    offset: int = 50, width: int = 20) -> np.ndarray:
    """Ground-truth ribbon geometry: columns [offset, offset+width) marked
    for every A-line of the arc."""
    if offset + width > crop_depth_px:
        raise ValueError("ribbon extends past the cropped depth")
    mask = np.zeros((arc.n_alines, crop_depth_px), dtype=bool)
    mask[arc.alines(), offset:offset + width] = True
    return mask


def _circular_runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """Maximal (start, length) runs of True on a circle, sorted by start."""
    n = flags.shape[0]
    if not flags.any():
        return []
    if flags.all():
        return [(0, n)]
    starts = np.flatnonzero(flags & ~np.roll(flags, 1))
    runs = []
    for s in starts:
        ln = 1
        while flags[(s + ln) % n]:
            ln += 1
        runs.append((int(s), ln))
    return sorted(runs)


def detect_guidewire(pre: PreprocessedFrame | np.ndarray,
                     params: GuidewireParams = GuidewireParams()) -> np.ndarray:
    """Flag A-lines inside the guidewire shadow.

    An A-line is shadow iff its mean tissue intensity over the proximal
    depth window falls below tau_frac x the frame median of that statistic,
    in a circular run of at least min_run A-lines.
    """
    tissue = pre.tissue if isinstance(pre, PreprocessedFrame) else np.asarray(pre)
    depth = min(params.depth_px, tissue.shape[1])
    stat = tissue[:, :depth].mean(axis=1)
    ref = float(np.median(stat))
    dark = stat < params.tau_frac * ref
    gw = np.zeros_like(dark)
    for s, ln in _circular_runs(dark):
        if ln >= params.min_run:
            idx = (s + np.arange(ln)) % dark.shape[0]
            gw[idx] = True
    return gw


def baseline_classify(pre: PreprocessedFrame, params: BaselineParams,
                      calib: CalibrationMeta,
                      gw_params: GuidewireParams = GuidewireParams()) -> ALineLabels:
    """Attenuation-based lipid stand-in for an external pixel segmenter.

    Per non-shadow A-line: least-squares slope of log intensity over the fit
    window gives an attenuation estimate (per mm); the distal/proximal mean
    ratio captures the deep signal wash-out. Lipid needs fast attenuation AND
    a dark distal zone. The log floor is relative to the frame's 99th
    percentile so that decisions are invariant to global intensity scaling.
    """
    tissue = pre.tissue
    n_alines, depth = tissue.shape
    gw = detect_guidewire(pre, gw_params)

    a, b = params.fit_start_px, min(params.fit_stop_px, depth)
    p99 = float(np.percentile(tissue, 99))
    floor = max(p99 * 1e-6, 1e-12)
    logi = np.log(np.maximum(tissue[:, a:b], floor))
    x = np.arange(a, b, dtype=np.float64)
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    slope = (logi - logi.mean(axis=1, keepdims=True)) @ xc / denom
    atten_per_mm = -slope * calib.radial_px_per_mm

    prox = tissue[:, params.proximal_start_px:min(params.proximal_stop_px, depth)].mean(axis=1)
    dist = tissue[:, params.distal_start_px:min(params.distal_stop_px, depth)].mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(prox > 0, dist / prox, np.inf)

    lipid = (atten_per_mm >= params.atten_min_per_mm) & (ratio <= params.distal_ratio_max)
    lipid &= ~gw
    return ALineLabels(lipid=lipid, guidewire=gw)


def extract_arcs(labels: ALineLabels, bridge_max: int = 5, min_width: int = 5) -> list[LipidArc]:
    """Group positive A-lines into circular arcs.

    Gaps of at most bridge_max non-positive (negative or guidewire) A-lines
    between positives are bridged; arcs shorter than min_width are dropped.
    """
    n = labels.n_alines
    runs = _circular_runs(labels.lipid)
    if not runs:
        return []
    if len(runs) > 1 and bridge_max > 0:
        merged = [list(runs[0])]
        for s, ln in runs[1:]:
            ps, pln = merged[-1]
            gap = (s - (ps + pln)) % n
            if gap <= bridge_max:
                merged[-1][1] = pln + gap + ln
            else:
                merged.append([s, ln])
        # wrap-around gap between last and first run
        if len(merged) > 1:
            fs, fln = merged[0]
            ls, lln = merged[-1]
            gap = (fs - (ls + lln)) % n
            if gap <= bridge_max:
                merged[0] = [ls, min(lln + gap + fln, n)]
                merged.pop()
        runs = [(s % n, min(ln, n)) for s, ln in merged]
    arcs = [LipidArc(start=s, length=ln, n_alines=n) for s, ln in runs if ln >= min_width]
    return sorted(arcs, key=lambda a: a.start)


def lipid_angle(arcs: Sequence[LipidArc], n_alines: int) -> float:
    """Total angular extent of the arcs, degrees in [0, 360]."""
    if not arcs:
        return 0.0
    covered = np.zeros(n_alines, dtype=bool)
    for arc in arcs:
        idx = arc.alines()
        if covered[idx].any():
            raise ValueError("arcs overlap")
        covered[idx] = True
    return float(covered.sum()) * 360.0 / n_alines
