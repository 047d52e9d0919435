import subprocess
import sys

import numpy as np
import pytest

from octcap import cli, phantom, store
from test_phantom import shrunk_preset


@pytest.fixture(scope="module")
def phantom_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("pb") / "tcfa"
    spec = shrunk_preset("tcfa_short", 16)
    pb, gt = phantom.save_phantom(spec, d)
    return d, spec, gt


def run_cli(*argv):
    return cli.main(list(argv))


def test_analyze_baseline_flags_tcfa(phantom_dir, tmp_path):
    d, spec, gt = phantom_dir
    out = tmp_path / "results.json"
    assert run_cli("analyze", str(d), "--baseline", "--out", str(out), "--threads", "1") == 0
    doc = store.read_results(out)
    lesion_frames = {z for z, ft in enumerate(gt.frames) if ft.arcs}
    for f in doc["frames"]:
        m = f["measurements"]
        if f["frame_index"] in lesion_frames:
            assert m is not None and m["tcfa"]
        else:
            assert m is None


def test_analyze_requires_one_lipid_source(phantom_dir, tmp_path):
    d, _, _ = phantom_dir
    out = tmp_path / "r.json"
    assert run_cli("analyze", str(d), "--out", str(out)) == 2
    assert run_cli("analyze", str(d), "--baseline",
                   "--masks", str(d / "annotations.json"), "--out", str(out)) == 2


def test_analyze_with_masks_matches_truth_geometry(phantom_dir, tmp_path):
    d, spec, gt = phantom_dir
    out = tmp_path / "results.json"
    assert run_cli("analyze", str(d), "--masks", str(d / "annotations.json"),
                   "--out", str(out)) == 0
    doc = store.read_results(out)
    for z, ft in enumerate(gt.frames):
        entry = doc["frames"][z]
        assert entry["arcs"] == [{"start": a.start, "length": a.length} for a in ft.arcs]
        for b, cap in zip(entry["boundaries"], ft.abluminal_px):
            assert np.abs(np.asarray(b["r_abluminal_px"]) - cap).mean() <= 2.0


def test_analyze_deterministic(phantom_dir, tmp_path):
    d, _, _ = phantom_dir
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run_cli("analyze", str(d), "--baseline", "--out", str(a))
    run_cli("analyze", str(d), "--baseline", "--out", str(b), "--threads", "3")
    assert a.read_bytes() == b.read_bytes()


def test_phantom_cmd_deterministic(tmp_path):
    one, two = tmp_path / "one", tmp_path / "two"
    assert run_cli("phantom", "--preset", "no_lipid", "--seed", "1", "--out", str(one)) == 0
    assert run_cli("phantom", "--preset", "no_lipid", "--seed", "1", "--out", str(two)) == 0
    names = sorted(p.name for p in one.iterdir())
    assert names == sorted(p.name for p in two.iterdir())
    for n in names:
        assert (one / n).read_bytes() == (two / n).read_bytes()


def test_phantom_unknown_preset(tmp_path):
    assert run_cli("phantom", "--preset", "nope", "--out", str(tmp_path / "x")) == 2


def test_eval_identical_docs(phantom_dir, tmp_path):
    d, _, _ = phantom_dir
    out = tmp_path / "m.json"
    ann = str(d / "annotations.json")
    assert run_cli("eval", ann, ann, "--out", str(out)) == 0
    doc = store.read_json(out)
    assert doc["scores"]["dice"] == 1.0
    assert doc["counts"]["fp"] == 0 and doc["counts"]["fn"] == 0


def _annotation(tmp_path, name, arcs_by_frame, n_alines=504):
    doc = {"schema_version": "1", "kind": "annotation", "pullback_id": "p",
           "n_alines": n_alines,
           "frames": {str(k): {"arcs": [{"start": s, "length": ln} for s, ln in arcs]}
                      for k, arcs in arcs_by_frame.items()}}
    path = tmp_path / name
    store.write_annotation(path, doc)
    return str(path)


def test_eval_disjoint_labels(tmp_path):
    pred = _annotation(tmp_path, "pred.json", {0: [(0, 50)]})
    truth = _annotation(tmp_path, "truth.json", {0: [(100, 50)]})
    out = tmp_path / "m.json"
    assert run_cli("eval", pred, truth, "--out", str(out)) == 0
    assert store.read_json(out)["scores"]["dice"] == 0.0


def test_eval_lands_on_paper_dice(tmp_path):
    # tp=100, fp=25, fn=14 -> dice = 200/239 = 0.837 (3 d.p.)
    pred = _annotation(tmp_path, "pred.json", {0: [(14, 125)]})
    truth = _annotation(tmp_path, "truth.json", {0: [(0, 114)]})
    out = tmp_path / "m.json"
    assert run_cli("eval", pred, truth, "--out", str(out)) == 0
    doc = store.read_json(out)
    assert doc["counts"] == {"tp": 100, "fp": 25, "fn": 14, "tn": 504 - 139}
    assert doc["scores"]["dice"] == pytest.approx(0.837, abs=5e-4)


def _results_doc(pullback_id, values, config, angle=120.0):
    frames = []
    for k, v in enumerate(values):
        m = None
        if v is not None:
            m = {"lipid_angle_deg": angle, "min_thickness_um": v,
                 "mean_thickness_um": v + 10.0, "tcfa": bool(v < 65.0 and angle >= 90.0)}
        frames.append({"frame_index": k, "failed": False, "error": None,
                       "lumen_r_px": [80.0] * 504, "arcs": [], "boundaries": [],
                       "measurements": m})
    return {"schema_version": "1", "kind": "results", "pullback_id": pullback_id,
            "config": config.to_dict(), "frames": frames,
            "summary": {"n_frames": len(values)}}


def test_compare_identical(tmp_path, config):
    vals = [100.0 + 7 * (i % 5) for i in range(20)]
    doc = _results_doc("p", vals, config)
    pa, pb = tmp_path / "a.json", tmp_path / "b.json"
    store.write_results(pa, doc)
    store.write_results(pb, doc)
    out = tmp_path / "cmp.json"
    assert run_cli("compare", str(pa), str(pb), "--out", str(out)) == 0
    m = store.read_json(out)["measurements"]["min_thickness_um"]
    assert m["bias"] == 0.0 and m["r2"] == 1.0


def test_compare_constant_offset(tmp_path, config):
    vals = [100.0 + 7 * (i % 5) for i in range(20)]
    a = _results_doc("p", vals, config)
    b = _results_doc("p", [v + 5.0 for v in vals], config)
    pa, pb = tmp_path / "a.json", tmp_path / "b.json"
    store.write_results(pa, a)
    store.write_results(pb, b)
    out = tmp_path / "cmp.json"
    run_cli("compare", str(pa), str(pb), "--out", str(out))
    m = store.read_json(out)["measurements"]["min_thickness_um"]
    assert m["bias"] == pytest.approx(-5.0)
    assert m["sd_diff"] == pytest.approx(0.0, abs=1e-9)


def test_compare_recovers_noise_scale(tmp_path, config):
    rng = np.random.default_rng(3)
    sigma = 8.0
    base = rng.uniform(80, 200, 200)
    a = _results_doc("p", list(base + rng.normal(0, sigma, 200)), config)
    b = _results_doc("p", list(base + rng.normal(0, sigma, 200)), config)
    pa, pb = tmp_path / "a.json", tmp_path / "b.json"
    store.write_results(pa, a)
    store.write_results(pb, b)
    out = tmp_path / "cmp.json"
    run_cli("compare", str(pa), str(pb), "--out", str(out))
    m = store.read_json(out)["measurements"]["min_thickness_um"]
    assert abs(m["sd_diff"] - sigma * np.sqrt(2)) <= 0.15 * sigma * np.sqrt(2)


def test_compare_frame_set_mismatch(tmp_path, config):
    a = _results_doc("p", [100.0] * 5, config)
    b = _results_doc("p", [100.0] * 6, config)
    pa, pb = tmp_path / "a.json", tmp_path / "b.json"
    store.write_results(pa, a)
    store.write_results(pb, b)
    assert run_cli("compare", str(pa), str(pb), "--out", str(tmp_path / "c.json")) == 1


def test_export_map(phantom_dir, tmp_path):
    d, spec, _ = phantom_dir
    res = tmp_path / "r.json"
    run_cli("analyze", str(d), "--masks", str(d / "annotations.json"), "--out", str(res))
    out = tmp_path / "map.png"
    assert run_cli("export-map", str(res), "--out", str(out), "--range", "0:300") == 0
    from PIL import Image
    img = np.array(Image.open(out))
    assert img.shape == (360, spec.n_frames + 14, 3)


def test_help_exits_zero():
    for sub in ("analyze", "phantom", "eval", "compare", "export-map", "serve"):
        with pytest.raises(SystemExit) as exc:
            cli.main([sub, "--help"])
        assert exc.value.code == 0


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        cli.main(["analyze", "x", "--out", "y", "--frobnicate"])
    assert exc.value.code == 2


def test_missing_pullback_is_domain_error(tmp_path):
    assert run_cli("analyze", str(tmp_path / "nope"), "--baseline",
                   "--out", str(tmp_path / "r.json")) == 1


def test_serve_port_zero_prints_port(phantom_dir):
    d, _, _ = phantom_dir
    proc = subprocess.Popen(
        [sys.executable, "-m", "octcap.cli", "serve", "--port", "0",
         "--data-root", str(d.parent)],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    try:
        line = proc.stdout.readline()
        assert "serving on http://127.0.0.1:" in line
        port = int(line.rsplit(":", 1)[1])
        assert port > 0
    finally:
        proc.terminate()
        proc.wait(timeout=10)
