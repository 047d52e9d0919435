import numpy as np
import pytest
from hypothesis import given, strategies as st

from octcap.model import (AnalysisConfig, CalibrationMeta, PolarFrame, Pullback,
                          aline_angle_deg, aline_r_to_xy, polar_resample, px_to_um,
                          scan_convert, xy_to_aline_r)


def test_aline_angle_examples():
    assert aline_angle_deg(0, 504) == 0.0
    assert aline_angle_deg(252, 504) == 180.0
    assert aline_angle_deg(126, 504) == 90.0


def test_aline_angle_out_of_range():
    with pytest.raises(IndexError):
        aline_angle_deg(504, 504)
    with pytest.raises(IndexError):
        aline_angle_deg(-1, 504)


@given(st.integers(min_value=8, max_value=2048))
def test_aline_angle_monotone_uniform_gaps(n):
    angles = [aline_angle_deg(i, n) for i in range(n)]
    gaps = np.diff(angles)
    assert np.all(gaps > 0)
    assert np.allclose(gaps, 360.0 / n)


def test_px_to_um_examples():
    calib = CalibrationMeta()
    assert px_to_um(300, calib) == 1500.0
    assert px_to_um(0, calib) == 0.0
    assert px_to_um(13, calib) == 65.0


@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_px_to_um_linear(a, b):
    calib = CalibrationMeta()
    assert px_to_um(a + b, calib) == pytest.approx(px_to_um(a, calib) + px_to_um(b, calib))


def test_calibration_validation():
    with pytest.raises(ValueError):
        CalibrationMeta(radial_px_per_mm=0)
    with pytest.raises(ValueError):
        CalibrationMeta(n_alines=4)
    with pytest.raises(ValueError):
        CalibrationMeta(bit_depth=12)


def test_pullback_validation():
    calib = CalibrationMeta(n_alines=8)
    frames = [PolarFrame(np.zeros((8, 16), dtype=np.uint16), i) for i in range(3)]
    Pullback(id="x", frames=frames, calib=calib)
    bad = [PolarFrame(np.zeros((8, 16), dtype=np.uint16), i) for i in (0, 2, 1)]
    with pytest.raises(ValueError):
        Pullback(id="x", frames=bad, calib=calib)


def test_frames_become_readonly():
    f = PolarFrame(np.zeros((8, 16)), 0)
    with pytest.raises(ValueError):
        f.intensities[0, 0] = 1


def test_scan_convert_constant_disc():
    frame = PolarFrame(np.full((64, 100), 80.0), 0)
    img = scan_convert(frame, out_size=256)
    c = (256 - 1) / 2
    yy, xx = np.mgrid[0:256, 0:256]
    r = np.hypot(xx - c, yy - c)
    inside = r < 90 * (128 / 100)
    corner = r > 100 * (128 / 100)
    assert np.allclose(img[inside], 80.0)
    assert np.all(img[corner] == 0.0)


def test_scan_convert_bright_ray_at_12_oclock():
    grid = np.zeros((360, 100))
    grid[0] = 1000.0
    img = scan_convert(grid, out_size=256)
    c = int((256 - 1) / 2)
    top = img[20:c - 5, c]       # straight up from center
    bottom = img[c + 5:-20, c]
    assert top.mean() > 100
    assert np.allclose(bottom, 0.0, atol=1e-9)


def test_scan_convert_round_trip_smooth(flat_lumen_frame):
    pb, _ = flat_lumen_frame
    grid = pb.frames[0].intensities.astype(float)
    cart = scan_convert(grid, out_size=2 * grid.shape[1])
    back = polar_resample(cart, grid.shape[0], grid.shape[1])
    rng_span = grid.max() - grid.min()
    err = np.abs(back - grid).mean()
    assert err <= 0.02 * rng_span


def test_scan_convert_rotation_equivariance(flat_lumen_frame):
    pb, _ = flat_lumen_frame
    grid = pb.frames[0].intensities.astype(float)
    # give the frame angular structure
    grid = grid * (1.0 + 0.4 * np.sin(2 * np.pi * np.arange(grid.shape[0]) / grid.shape[0]))[:, None]
    n = grid.shape[0]
    k = n // 4
    a = scan_convert(np.roll(grid, k, axis=0), out_size=256)
    b = np.rot90(scan_convert(grid, out_size=256), k=3)  # 90 deg clockwise
    span = grid.max() - grid.min()
    assert np.abs(a - b).max() <= 0.02 * span


def test_scan_convert_unshifts_back_to_acquisition_coords():
    rng = np.random.default_rng(3)
    grid = rng.uniform(0, 100, size=(90, 64))
    shifts = rng.integers(0, 20, size=90)
    shifted = np.zeros_like(grid)
    for i in range(90):
        shifted[i, :64 - shifts[i]] = grid[i, shifts[i]:]
    full = np.zeros((90, 64 + int(shifts.max())))
    for i in range(90):
        full[i, shifts[i]:shifts[i] + 64] = shifted[i]
    a = scan_convert(shifted, out_size=256, lumen_offsets=shifts)
    b = scan_convert(full, out_size=256)
    assert np.allclose(a, b)


def test_xy_mapping_inverse():
    aline = np.arange(0, 504, 7)
    r = np.linspace(5, 280, aline.size)
    x, y = aline_r_to_xy(aline, r, 504, 300, 700)
    a2, r2 = xy_to_aline_r(x, y, 504, 300, 700)
    assert np.allclose(r2, r, atol=1e-9)
    assert np.allclose(np.minimum(np.abs(a2 - aline), 504 - np.abs(a2 - aline)), 0, atol=1e-9)


def test_config_overrides_and_adjusted_threshold():
    cfg = AnalysisConfig()
    assert cfg.tcfa_threshold_um_adjusted == 65.0
    cfg2 = AnalysisConfig(shrinkage_adjust_pct=20.0)
    assert cfg2.tcfa_threshold_um_adjusted == pytest.approx(78.0)
    cfg3 = cfg.with_overrides({"dp.smooth_max_px": "3", "crop_depth_px": "256"})
    assert cfg3.dp.smooth_max_px == 3
    assert cfg3.crop_depth_px == 256
    with pytest.raises(KeyError):
        cfg.with_overrides({"nope.field": "1"})


def test_config_round_trip():
    cfg = AnalysisConfig(tcfa_min_angle_deg=45.0)
    assert AnalysisConfig.from_dict(cfg.to_dict()) == cfg
