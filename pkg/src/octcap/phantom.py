"""Deterministic synthetic pullbacks with analytic ground truth.

Each A-line renders as a dark lumen interior, a bright fibrous band decaying
at the fibrous attenuation, and, inside lesions, a fast drop to a dim lipid
tail beyond the cap. The bright-to-dark transition is blended over a few
pixels (diffuse outer border) and is centered exactly on the programmed cap
boundary, so a noise-free pullback is a pixel-exact oracle for the boundary
search. Ground truth is emitted before speckle: noise perturbs intensities,
never geometry.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import erf

from .capseg import FrameMeasurements, cap_stats
from .lipid import ALineLabels, LipidArc, lipid_angle
from .model import AnalysisConfig, CalibrationMeta, PolarFrame, Pullback
from .preprocess import LumenBoundary


@dataclass(frozen=True)
class LesionSpec:
    """One lipid lesion: a frame range x angular span with a cap thickness
    profile dipping from cap_edge_um at the rim to cap_min_um mid-arc."""

    frame_start: int
    frame_stop: int               # exclusive
    angle_start_deg: float
    angle_span_deg: float
    cap_min_um: float
    cap_edge_um: float
    lipid_atten_per_mm: float = 8.0
    fibrous_atten_per_mm: Optional[float] = None  # overrides the spec default

    def aline_range(self, n_alines: int) -> tuple[int, int]:
        start = int(round(self.angle_start_deg * n_alines / 360.0))
        span = int(round(self.angle_span_deg * n_alines / 360.0))
        return start % n_alines, max(span, 1)

    def thickness_um(self, positions: np.ndarray, span: int) -> np.ndarray:
        """Raised-cosine dip; the minimum is attained exactly mid-span."""
        u = positions / span
        w = 0.5 - 0.5 * np.cos(2.0 * np.pi * u)
        return self.cap_edge_um - (self.cap_edge_um - self.cap_min_um) * w


@dataclass(frozen=True)
class GuidewireSpec:
    center_aline: int
    width: int = 24


@dataclass(frozen=True)
class PhantomSpec:
    name: str
    n_frames: int
    n_alines: int = 504
    n_samples: int = 512
    lumen_base_px: float = 80.0
    lumen_amp_px: float = 4.0
    lumen_cycles: int = 2
    lumen_phase_deg: float = 0.0
    lesions: tuple[LesionSpec, ...] = ()
    guidewire: Optional[GuidewireSpec] = None
    speckle_sigma: float = 0.2
    seed: int = 0
    amplitude_frac: float = 0.65
    fibrous_atten_per_mm: float = 1.8
    lipid_drop_frac: float = 0.04   # lipid tail level relative to the cap end
    border_blur_px: float = 3.0
    cap_shoulder_gain: float = 0.3  # bright interface band just inside the cap
    cap_shoulder_px: float = 14.0
    bit_depth: int = 16

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.speckle_sigma < 0:
            raise ValueError("speckle_sigma must be >= 0")
        for les in self.lesions:
            if not (0 <= les.frame_start < les.frame_stop <= self.n_frames):
                raise ValueError(f"lesion frame range [{les.frame_start}, "
                                 f"{les.frame_stop}) outside pullback")
            if les.cap_min_um <= 0 or les.cap_edge_um < les.cap_min_um:
                raise ValueError("cap thickness field must be positive with edge >= min")
            _, span = les.aline_range(self.n_alines)
            if span > self.n_alines:
                raise ValueError("lesion angular span exceeds the circle")

    @property
    def calib(self) -> CalibrationMeta:
        return CalibrationMeta(n_alines=self.n_alines, bit_depth=self.bit_depth)


@dataclass
class FrameTruth:
    lumen_r_px: np.ndarray
    labels: ALineLabels
    arcs: list[LipidArc]
    abluminal_px: list[np.ndarray]      # per arc, shifted coords
    thickness_um: list[np.ndarray]      # per arc
    measurements: Optional[FrameMeasurements]


@dataclass
class GroundTruth:
    spec: PhantomSpec
    frames: list[FrameTruth]

    def lumen_boundary(self, z: int) -> LumenBoundary:
        return LumenBoundary(self.frames[z].lumen_r_px.astype(float), source="external")


def _guidewire_mask(spec: PhantomSpec) -> np.ndarray:
    gw = np.zeros(spec.n_alines, dtype=bool)
    if spec.guidewire is not None:
        half = spec.guidewire.width // 2
        idx = (spec.guidewire.center_aline + np.arange(-half, spec.guidewire.width - half)) % spec.n_alines
        gw[idx] = True
    return gw


def _lumen_radii(spec: PhantomSpec) -> np.ndarray:
    i = np.arange(spec.n_alines)
    theta = 2.0 * np.pi * spec.lumen_cycles * i / spec.n_alines \
        + np.deg2rad(spec.lumen_phase_deg)
    r = spec.lumen_base_px + spec.lumen_amp_px * np.sin(theta)
    return np.floor(r + 0.5).astype(int)


def _frame_truth(spec: PhantomSpec, z: int, gw: np.ndarray,
                 lumen: np.ndarray, config: AnalysisConfig) -> FrameTruth:
    um_per_px = spec.calib.um_per_px
    arcs: list[LipidArc] = []
    abluminal: list[np.ndarray] = []
    thickness: list[np.ndarray] = []
    lipid = np.zeros(spec.n_alines, dtype=bool)
    for les in spec.lesions:
        if not les.frame_start <= z < les.frame_stop:
            continue
        start, span = les.aline_range(spec.n_alines)
        arc = LipidArc(start=start, length=span, n_alines=spec.n_alines)
        pos = np.arange(span)
        cap_px = np.floor(les.thickness_um(pos, span) / um_per_px + 0.5).astype(int)
        arcs.append(arc)
        abluminal.append(cap_px)
        thickness.append(cap_px * um_per_px)
        lipid[arc.alines()] = True
    labels = ALineLabels(lipid=lipid & ~gw, guidewire=gw)
    meas = None
    if arcs:
        angle = lipid_angle(arcs, spec.n_alines)
        meas = cap_stats(np.concatenate(thickness), angle, config)
    return FrameTruth(lumen_r_px=lumen, labels=labels, arcs=arcs,
                      abluminal_px=abluminal, thickness_um=thickness,
                      measurements=meas)


def _render_frame(spec: PhantomSpec, z: int, gw: np.ndarray,
                  lumen: np.ndarray, truth: FrameTruth) -> np.ndarray:
    n, w = spec.n_alines, spec.n_samples
    calib = spec.calib
    px_mm = 1.0 / calib.radial_px_per_mm
    amp = spec.amplitude_frac * calib.intensity_max

    d = np.arange(w)[None, :] - lumen[:, None]       # depth from lumen, px
    mu_f = np.full((n, 1), spec.fibrous_atten_per_mm)
    for les in spec.lesions:
        if les.frame_start <= z < les.frame_stop and les.fibrous_atten_per_mm is not None:
            start, span = les.aline_range(spec.n_alines)
            idx = (start + np.arange(span)) % n
            mu_f[idx, 0] = les.fibrous_atten_per_mm
    fib = amp * np.exp(-mu_f * np.maximum(d, 0) * px_mm)

    intensity = fib.copy()
    lesions_here = [les for les in spec.lesions if les.frame_start <= z < les.frame_stop]
    for arc, cap_px, les in zip(truth.arcs, truth.abluminal_px, lesions_here):
        idx = arc.alines()
        c = cap_px[:, None].astype(float)
        dl = d[idx]
        # bright interface band: intensity ramps up toward the abluminal
        # boundary (high backscatter at the fibrous/lipid interface)
        u = np.clip((dl - (c - spec.cap_shoulder_px)) / spec.cap_shoulder_px, 0.0, 1.0)
        shoulder = 1.0 + spec.cap_shoulder_gain * (0.5 - 0.5 * np.cos(np.pi * u))
        cap_end = amp * np.exp(-mu_f[idx] * c * px_mm) * (1.0 + spec.cap_shoulder_gain)
        tail = spec.lipid_drop_frac * cap_end \
            * np.exp(-les.lipid_atten_per_mm * np.maximum(dl - c, 0.0) * px_mm)
        # diffuse outer border: CDF blend centered exactly on the cap boundary
        blend = 0.5 * (1.0 + erf((dl - c) / (np.sqrt(2.0) * spec.border_blur_px)))
        intensity[idx] = (1.0 - blend) * fib[idx] * shoulder + blend * tail

    intensity[d < 0] = 0.0
    intensity[gw] = 0.0
    return intensity


def generate(spec: PhantomSpec,
             config: Optional[AnalysisConfig] = None) -> tuple[Pullback, GroundTruth]:
    """Render the pullback and its analytic ground truth.

    Identical (spec, seed) give byte-identical pullbacks; frames use
    independent seeded substreams so rendering order never matters.
    """
    config = config or AnalysisConfig()
    gw = _guidewire_mask(spec)
    lumen = _lumen_radii(spec)
    calib = spec.calib
    frames = []
    truths = []
    for z in range(spec.n_frames):
        truth = _frame_truth(spec, z, gw, lumen, config)
        intensity = _render_frame(spec, z, gw, lumen, truth)
        if spec.speckle_sigma > 0:
            rng = np.random.default_rng([spec.seed, z])
            noise = rng.standard_normal(intensity.shape)
            s = spec.speckle_sigma
            intensity = intensity * np.exp(s * noise - 0.5 * s * s)
        quantized = np.clip(np.floor(intensity + 0.5), 0, calib.intensity_max)
        frames.append(PolarFrame(quantized.astype(np.uint16), frame_index=z))
        truths.append(truth)
    pb = Pullback(id=f"{spec.name}-seed{spec.seed}", frames=frames, calib=calib)
    return pb, GroundTruth(spec=spec, frames=truths)


def annotation_from_ground_truth(gt: GroundTruth, pullback_id: str) -> dict:
    """Materialize ground truth as a standard annotation document."""
    from . import store

    frames: dict[str, dict] = {}
    n = gt.spec.n_alines
    for z, ft in enumerate(gt.frames):
        entry: dict = {
            "lumen_r_px": [float(v) for v in ft.lumen_r_px],
            "provenance": {"source": "auto"},
        }
        gw_runs = [{"start": int(s), "length": int(ln)}
                   for s, ln in _runs_of(ft.labels.guidewire)]
        if gw_runs:
            entry["guidewire"] = gw_runs
        if ft.arcs:
            entry["arcs"] = [{"start": a.start, "length": a.length} for a in ft.arcs]
            entry["abluminal"] = [
                {"start": a.start, "length": a.length, "r_px": [int(v) for v in r]}
                for a, r in zip(ft.arcs, ft.abluminal_px)]
        frames[str(z)] = entry
    doc = {"schema_version": store.SCHEMA_VERSION, "kind": "annotation",
           "pullback_id": pullback_id, "n_alines": n, "frames": frames}
    return doc


def _runs_of(flags: np.ndarray) -> list[tuple[int, int]]:
    from .lipid import _circular_runs
    return _circular_runs(np.asarray(flags, dtype=bool))


def save_phantom(spec: PhantomSpec, out_dir, frame_format: str = "png",
                 config: Optional[AnalysisConfig] = None) -> tuple[Pullback, GroundTruth]:
    """Generate and write the pullback container plus its ground-truth
    annotation document."""
    from . import store

    pb, gt = generate(spec, config)
    store.write_pullback(pb, out_dir, frame_format=frame_format)
    doc = annotation_from_ground_truth(gt, pb.id)
    store.write_annotation(f"{out_dir}/annotations.json", doc)
    return pb, gt


def presets() -> dict[str, PhantomSpec]:
    """Named phantom presets: the four lesion archetypes (short/long, with and
    without a thin cap), plus no-lipid and noise-free test fixtures.

    Frame counts follow 0.2 mm pitch: 15 mm = 75 frames, 5 mm = 25 frames.
    """
    gw = GuidewireSpec(center_aline=0, width=24)
    return {
        # short lesion (6 mm < 7 mm), thin cap: min 50 um, mean 62.5 um
        "tcfa_short": PhantomSpec(
            name="tcfa_short", n_frames=60, guidewire=gw, seed=7,
            lesions=(LesionSpec(15, 45, angle_start_deg=90.0, angle_span_deg=120.0,
                                cap_min_um=50.0, cap_edge_um=75.0),)),
        # two heavily lipidic lesions of 15 mm and 5 mm, both mean < 65 um
        "tcfa_long": PhantomSpec(
            name="tcfa_long", n_frames=140, guidewire=gw, seed=7,
            lesions=(LesionSpec(10, 85, angle_start_deg=70.0, angle_span_deg=160.0,
                                cap_min_um=45.0, cap_edge_um=70.0),
                     LesionSpec(100, 125, angle_start_deg=200.0, angle_span_deg=100.0,
                                cap_min_um=50.0, cap_edge_um=70.0))),
        # short stable lesion (2.4 mm < 3 mm), cap always > 150 um
        "stable_short": PhantomSpec(
            name="stable_short", n_frames=40, guidewire=gw, seed=7,
            lesions=(LesionSpec(14, 26, angle_start_deg=135.0, angle_span_deg=90.0,
                                cap_min_um=160.0, cap_edge_um=220.0),)),
        # very long stable lesion (32 mm > 30 mm), cap always > 80 um
        "stable_long": PhantomSpec(
            name="stable_long", n_frames=200, guidewire=gw, seed=7,
            lesions=(LesionSpec(20, 180, angle_start_deg=110.0, angle_span_deg=140.0,
                                cap_min_um=85.0, cap_edge_um=140.0),)),
        "no_lipid": PhantomSpec(name="no_lipid", n_frames=20, guidewire=gw, seed=7),
        # flat lumen, flat 150 um cap (30 px), no noise: the DP test fixture
        "noisefree_step": PhantomSpec(
            name="noisefree_step", n_frames=3, speckle_sigma=0.0,
            lumen_amp_px=0.0, seed=7,
            lesions=(LesionSpec(0, 3, angle_start_deg=90.0, angle_span_deg=120.0,
                                cap_min_um=150.0, cap_edge_um=150.0),)),
    }
