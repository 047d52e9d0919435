import dataclasses
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from octcap import cli, phantom, store
from octcap.model import xy_to_aline_r
from octcap.service import create_app


@pytest.fixture(scope="module")
def data_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataroot")
    phantom.save_phantom(phantom.presets()["noisefree_step"], root / "step")
    varied = phantom.PhantomSpec(
        name="varied", n_frames=12, speckle_sigma=0.0, lumen_amp_px=0.0,
        guidewire=None, seed=3,
        lesions=(phantom.LesionSpec(1, 6, angle_start_deg=90.0, angle_span_deg=120.0,
                                    cap_min_um=50.0, cap_edge_um=75.0),
                 phantom.LesionSpec(7, 12, angle_start_deg=200.0, angle_span_deg=100.0,
                                    cap_min_um=80.0, cap_edge_um=110.0)))
    phantom.save_phantom(varied, root / "varied")
    return root


@pytest.fixture(scope="module")
def client(data_root):
    return TestClient(create_app(data_root))


def make_session(client, pid, analyst="analyst1"):
    r = client.post("/api/sessions", json={"analyst_id": analyst, "pullback_id": pid})
    assert r.status_code == 200
    return r.json()["session_id"]


def test_list_pullbacks(client):
    ids = {p["id"] for p in client.get("/api/pullbacks").json()}
    assert {"step", "varied"} <= ids


def test_frame_png_views(client):
    r = client.get("/api/pullbacks/step/frames/0")
    assert r.status_code == 200 and r.headers["content-type"] == "image/png"
    img = np.array(Image.open(io.BytesIO(r.content)))
    assert img.shape == (504, 512)
    r2 = client.get("/api/pullbacks/step/frames/0", params={"view": "cartesian"})
    img2 = np.array(Image.open(io.BytesIO(r2.content)))
    assert img2.shape == (1024, 1024)


def test_unknown_ids_404(client):
    assert client.get("/api/pullbacks/nope/frames/0").status_code == 404
    assert client.get("/api/pullbacks/step/frames/99").status_code == 404
    assert client.get("/api/pullbacks/step/frames/99/analysis").status_code == 404
    assert client.get("/api/sessions/nosuch").status_code == 404


def test_analysis_matches_automated_results(client, data_root):
    r = client.get("/api/pullbacks/step/frames/1/analysis")
    assert r.status_code == 200
    payload = r.json()
    auto = store.read_results(data_root / "step" / "auto_results.json")
    entry = auto["frames"][1]
    assert payload["arcs"] == entry["arcs"]
    assert payload["measurements"] == entry["measurements"]
    assert payload["boundaries"][0]["r_abluminal_px"] == entry["boundaries"][0]["r_abluminal_px"]
    assert payload["revision"] == 0
    row = payload["thickness_map_row"]
    assert sum(v is not None for v in row) == 120  # 120 degree arc in 360 bins
    assert all(v == 150.0 for v in row if v is not None)


def test_cartesian_overlays_round_trip(client):
    r = client.get("/api/pullbacks/step/frames/1/analysis", params={"view": "cartesian"})
    payload = r.json()
    cap = payload["overlays"]["cap"][0]
    pts = np.asarray(cap["points"])
    aline, radius = xy_to_aline_r(pts[:, 0], pts[:, 1], 504, 512, 1024)
    start, length = cap["start"], cap["length"]
    expect_alines = (start + np.arange(length)) % 504
    expect_r = np.asarray(payload["boundaries"][0]["r_abluminal_px"], dtype=float) + 80.0
    da = np.minimum(np.abs(aline - expect_alines), 504 - np.abs(aline - expect_alines))
    assert da.max() <= 1.0
    assert np.abs(radius - expect_r).max() <= 1.0


def test_polar_overlays_are_native_coordinates(client):
    payload = client.get("/api/pullbacks/step/frames/1/analysis").json()
    lum = np.asarray(payload["overlays"]["lumen"])
    assert lum.shape == (504, 2)
    assert np.allclose(lum[:, 1], 80.0)


def test_session_arc_shrink_updates_angle(client):
    sid = make_session(client, "step")
    r = client.put(f"/api/sessions/{sid}/frames/1/edits",
                   json={"arcs": [{"start": 126, "length": 63}], "expected_revision": 0})
    assert r.status_code == 200
    body = r.json()
    assert body["measurements"]["lipid_angle_deg"] == 45.0
    assert body["revision"] == 1
    # merged analysis reflects the edit; automated results untouched
    merged = client.get("/api/pullbacks/step/frames/1/analysis",
                        params={"session": sid}).json()
    assert merged["measurements"]["lipid_angle_deg"] == 45.0
    plain = client.get("/api/pullbacks/step/frames/1/analysis").json()
    assert plain["measurements"]["lipid_angle_deg"] == 120.0


def test_delete_all_arcs(client):
    sid = make_session(client, "step")
    r = client.put(f"/api/sessions/{sid}/frames/1/edits",
                   json={"arcs": "delete-all", "expected_revision": 0})
    assert r.status_code == 200
    assert r.json()["measurements"] is None


def test_anchor_at_truth_keeps_boundary(client):
    sid = make_session(client, "step")
    base = client.get("/api/pullbacks/step/frames/0/analysis").json()
    mid_aline = (126 + 294) // 2
    r = client.put(f"/api/sessions/{sid}/frames/0/edits",
                   json={"anchors": [[mid_aline, 30]], "expected_revision": 0})
    assert r.status_code == 200
    merged = client.get("/api/pullbacks/step/frames/0/analysis",
                        params={"session": sid}).json()
    assert merged["boundaries"][0]["r_abluminal_px"] == base["boundaries"][0]["r_abluminal_px"]


def test_anchor_forces_ramp_through_point(client):
    sid = make_session(client, "step")
    mid_aline = (126 + 294) // 2
    r = client.put(f"/api/sessions/{sid}/frames/0/edits",
                   json={"anchors": [[mid_aline, 40]], "expected_revision": 0})
    assert r.status_code == 200
    merged = client.get("/api/pullbacks/step/frames/0/analysis",
                        params={"session": sid}).json()
    path = np.asarray(merged["boundaries"][0]["r_abluminal_px"])
    j = mid_aline - 126
    assert path[j] == 40
    assert np.abs(np.diff(path)).max() <= 2
    far = np.abs(np.arange(path.size) - j) > 12
    assert np.all(path[far] == 30)


def test_anchor_errors(client):
    sid = make_session(client, "step")
    # outside any arc
    r = client.put(f"/api/sessions/{sid}/frames/0/edits",
                   json={"anchors": [[10, 30]], "expected_revision": 0})
    assert r.status_code == 400
    # outside the DP band
    r = client.put(f"/api/sessions/{sid}/frames/0/edits",
                   json={"anchors": [[200, 3]], "expected_revision": 0})
    assert r.status_code == 400
    # mutually unreachable anchors
    r = client.put(f"/api/sessions/{sid}/frames/0/edits",
                   json={"anchors": [[200, 30], [201, 60]], "expected_revision": 0})
    assert r.status_code == 422


def test_edit_idempotence(client):
    sid = make_session(client, "step")
    body = {"arcs": [{"start": 126, "length": 100}], "expected_revision": 0}
    r1 = client.put(f"/api/sessions/{sid}/frames/2/edits", json=body)
    r2 = client.put(f"/api/sessions/{sid}/frames/2/edits", json=body)
    assert r1.status_code == r2.status_code == 200
    assert r1.json() == r2.json()
    assert r2.json()["revision"] == 1


def test_conflicting_edit_gets_409(client):
    sid = make_session(client, "step")
    r1 = client.put(f"/api/sessions/{sid}/frames/1/edits",
                    json={"arcs": [{"start": 126, "length": 80}], "expected_revision": 0})
    assert r1.status_code == 200
    r2 = client.put(f"/api/sessions/{sid}/frames/1/edits",
                    json={"arcs": [{"start": 126, "length": 90}], "expected_revision": 0})
    assert r2.status_code == 409
    assert r2.json()["current_revision"] == 1
    r3 = client.put(f"/api/sessions/{sid}/frames/1/edits",
                    json={"arcs": [{"start": 126, "length": 90}], "expected_revision": 1})
    assert r3.status_code == 200
    assert r3.json()["revision"] == 2


def test_invalid_arc_bodies(client):
    sid = make_session(client, "step")
    r = client.put(f"/api/sessions/{sid}/frames/0/edits",
                   json={"arcs": [{"start": 600, "length": 10}], "expected_revision": 0})
    assert r.status_code == 400
    r = client.put(f"/api/sessions/{sid}/frames/0/edits",
                   json={"arcs": [{"start": 0, "length": 100},
                                  {"start": 50, "length": 100}], "expected_revision": 0})
    assert r.status_code == 400


def test_compare_identical_sessions(client):
    sa = make_session(client, "varied", "a1")
    sb = make_session(client, "varied", "a2")
    r = client.get("/api/compare", params={"a": sa, "b": sb})
    assert r.status_code == 200
    m = r.json()["measurements"]
    assert m["lipid_angle_deg"]["bias"] == 0.0
    assert m["lipid_angle_deg"]["r2"] == 1.0
    assert m["min_thickness_um"]["bias"] == 0.0
    assert m["min_thickness_um"]["r2"] == 1.0
    assert len(m["min_thickness_um"]["pairs"]) == 10


def test_compare_constant_offset_session(client):
    # session b drags the boundary 1 px shallower (5 um) at the thinnest point
    sa = make_session(client, "varied", "a1")
    sb = make_session(client, "varied", "a2")
    for z in range(1, 6):
        r = client.put(f"/api/sessions/{sb}/frames/{z}/edits",
                       json={"anchors": [[210, 9]], "expected_revision": 0})
        assert r.status_code == 200
    for z in range(7, 12):
        r = client.put(f"/api/sessions/{sb}/frames/{z}/edits",
                       json={"anchors": [[350, 15]], "expected_revision": 0})
        assert r.status_code == 200
    r = client.get("/api/compare", params={"a": sa, "b": sb})
    m = r.json()["measurements"]["min_thickness_um"]
    assert m["bias"] == pytest.approx(5.0)
    assert m["sd_diff"] == pytest.approx(0.0, abs=1e-9)


def test_compare_mismatched_pullbacks(client):
    sa = make_session(client, "step")
    sb = make_session(client, "varied")
    assert client.get("/api/compare", params={"a": sa, "b": sb}).status_code == 400


def test_compare_equals_offline_cli(client, tmp_path):
    sa = make_session(client, "varied", "expert1")
    sb = make_session(client, "varied", "expert2")
    client.put(f"/api/sessions/{sa}/frames/2/edits",
               json={"arcs": [{"start": 126, "length": 84}], "expected_revision": 0})
    client.put(f"/api/sessions/{sb}/frames/3/edits",
               json={"anchors": [[210, 12]], "expected_revision": 0})
    client.put(f"/api/sessions/{sb}/frames/8/edits",
               json={"arcs": "delete-all", "expected_revision": 0})
    live = client.get("/api/compare", params={"a": sa, "b": sb}).json()

    pa = tmp_path / "a.json"
    pb = tmp_path / "b.json"
    pa.write_bytes(client.get(f"/api/sessions/{sa}/export", params={"doc": "results"}).content)
    pb.write_bytes(client.get(f"/api/sessions/{sb}/export", params={"doc": "results"}).content)
    out = tmp_path / "cmp.json"
    assert cli.main(["compare", str(pa), str(pb), "--out", str(out)]) == 0
    offline = store.read_json(out)
    assert live["measurements"] == offline["measurements"]


def test_export_no_edit_byte_equals_automated(client, data_root):
    sid = make_session(client, "varied")
    r = client.get(f"/api/sessions/{sid}/export", params={"doc": "results"})
    assert r.content == (data_root / "varied" / "auto_results.json").read_bytes()


def test_export_round_trips_and_carries_provenance(client, tmp_path):
    sid = make_session(client, "step", analyst="drsmith")
    client.put(f"/api/sessions/{sid}/frames/1/edits",
               json={"arcs": [{"start": 126, "length": 63}], "expected_revision": 0})
    res = client.get(f"/api/sessions/{sid}/export", params={"doc": "results"})
    p = tmp_path / "r.json"
    p.write_bytes(res.content)
    doc = store.read_results(p)  # validates
    assert doc["frames"][1]["measurements"]["lipid_angle_deg"] == 45.0
    ann = client.get(f"/api/sessions/{sid}/export", params={"doc": "annotation"}).json()
    entry = ann["frames"]["1"]
    assert entry["provenance"]["source"] == "drsmith"
    assert entry["provenance"]["revision"] == 1
    assert ann["frames"]["0"]["provenance"]["source"] == "auto"


def test_analysis_is_pure_replay(client):
    sid = make_session(client, "step")
    client.put(f"/api/sessions/{sid}/frames/1/edits",
               json={"arcs": [{"start": 126, "length": 100}], "expected_revision": 0})
    a = client.get("/api/pullbacks/step/frames/1/analysis", params={"session": sid}).json()
    b = client.get("/api/pullbacks/step/frames/1/analysis", params={"session": sid}).json()
    assert a == b


def test_edits_never_mutate_automated_results(client, data_root):
    before = (data_root / "step" / "auto_results.json").read_bytes()
    sid = make_session(client, "step")
    client.put(f"/api/sessions/{sid}/frames/0/edits",
               json={"arcs": "delete-all", "expected_revision": 0})
    after = (data_root / "step" / "auto_results.json").read_bytes()
    assert before == after


def test_accept_flag_roundtrip(client):
    sid = make_session(client, "step")
    r = client.put(f"/api/sessions/{sid}/frames/2/edits",
                   json={"accepted": True, "expected_revision": 0})
    assert r.status_code == 200
    merged = client.get("/api/pullbacks/step/frames/2/analysis",
                        params={"session": sid}).json()
    assert merged["accepted"] is True


def test_409_when_auto_analyze_disabled(data_root, tmp_path_factory):
    root = tmp_path_factory.mktemp("cold")
    phantom.save_phantom(dataclasses.replace(phantom.presets()["noisefree_step"],
                                             n_frames=2,
                                             lesions=(dataclasses.replace(
                                                 phantom.presets()["noisefree_step"].lesions[0],
                                                 frame_start=0, frame_stop=2),)),
                         root / "cold")
    cold = TestClient(create_app(root, auto_analyze=False))
    r = cold.get("/api/pullbacks/cold/frames/0/analysis")
    assert r.status_code == 409
