"""Command-line entry point: analyze, phantom, eval, compare, export-map, serve."""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import socket
import sys
from pathlib import Path
from typing import Optional

from . import phantom as phantom_mod
from . import pipeline, store
from .model import AnalysisConfig

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def load_config(args) -> AnalysisConfig:
    cfg = AnalysisConfig()
    if getattr(args, "config", None):
        cfg = AnalysisConfig.from_dict(store.read_json(args.config))
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        overrides[key] = val
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (AnalysisConfig keys)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="config override with dotted keys, e.g. dp.smooth_max_px=3")


def cmd_analyze(args) -> int:
    config = load_config(args)
    if bool(args.masks) == bool(args.baseline):
        print("analyze: exactly one lipid source required (--masks or --baseline)",
              file=sys.stderr)
        return EXIT_USAGE
    pullback = store.read_pullback(args.pullback)
    annotation = None
    if args.masks:
        annotation = store.read_annotation(args.masks, n_alines=pullback.calib.n_alines,
                                           n_frames=pullback.n_frames)
    analysis = pipeline.analyze_pullback(pullback, config, annotation=annotation,
                                         use_baseline=args.baseline, threads=args.threads)
    doc = pipeline.results_doc(analysis)
    store.write_results(args.out, doc)

    medians = pipeline.stage_medians(analysis.results)
    report = {"per_frame_median_s": medians, "n_frames": pullback.n_frames,
              "n_failed": analysis.n_failed}
    print(json.dumps({"timing": report}, indent=2, sort_keys=True))
    if args.timing_out:
        store.write_json_atomic(args.timing_out, report)

    if analysis.n_failed > 0.5 * pullback.n_frames:
        print(f"analyze: lumen detection failed on {analysis.n_failed} of "
              f"{pullback.n_frames} frames", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_phantom(args) -> int:
    named = phantom_mod.presets()
    if args.preset not in named:
        print(f"phantom: unknown preset {args.preset!r}; have {sorted(named)}",
              file=sys.stderr)
        return EXIT_USAGE
    spec = named[args.preset]
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    if args.frames is not None:
        spec = dataclasses.replace(spec, n_frames=args.frames)
    if args.speckle is not None:
        spec = dataclasses.replace(spec, speckle_sigma=args.speckle)
    phantom_mod.save_phantom(spec, args.out, frame_format=args.format)
    print(f"phantom: wrote {spec.n_frames} frames to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = store.read_json(args.pred)
    truth = store.read_annotation(args.truth)
    if pred.get("kind") == "results":
        store.validate_results(pred)
        n_alines = pipeline._doc_n_alines(pred)
    else:
        store.validate_annotation(pred)
        n_alines = pred.get("n_alines") or truth.get("n_alines")
    if truth.get("n_alines") and n_alines and truth["n_alines"] != n_alines:
        print("eval: pred and truth pullback geometry differs", file=sys.stderr)
        return EXIT_DOMAIN
    doc = pipeline.evaluate_docs(pred, truth, int(n_alines))
    store.write_json_atomic(args.out, doc)
    print(json.dumps({"scores": doc["scores"], "counts": doc["counts"]},
                     indent=2, sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    a = store.read_results(args.results_a)
    b = store.read_results(args.results_b)
    try:
        doc = pipeline.compare_results_docs(a, b)
    except ValueError as exc:
        print(f"compare: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    store.write_json_atomic(args.out, doc)
    shown = {k: {kk: vv for kk, vv in v.items() if kk != "pairs"}
             for k, v in doc["measurements"].items()}
    print(json.dumps(shown, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_export_map(args) -> int:
    doc = store.read_results(args.results)
    lo, hi = (float(v) for v in args.range.split(":"))
    tmap = pipeline.thickness_map_from_results(doc, angle_bins=args.bins)
    store.render_thickness_map(tmap.values, (lo, hi), args.out)
    print(f"export-map: wrote {args.out}")
    return EXIT_OK


def default_ui_dir() -> Optional[Path]:
    env = os.environ.get("OCTCAP_UI_DIR")
    if env:
        return Path(env)
    repo_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return repo_dist if repo_dist.exists() else None


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    data_root = args.data_root or os.environ.get("OCTCAP_DATA_ROOT")
    if not data_root:
        print("serve: --data-root or OCTCAP_DATA_ROOT required", file=sys.stderr)
        return EXIT_USAGE
    port = args.port
    if port == 0:
        with socket.socket() as s:
            s.bind((args.host, 0))
            port = s.getsockname()[1]
    ui_dir = Path(args.ui_dir) if args.ui_dir else default_ui_dir()
    print(f"serving on http://{args.host}:{port}", flush=True)
    app = create_app(Path(data_root), frontend_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="octcap",
                                 description="Fibrous-cap analysis for IVOCT pullbacks")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run the full pipeline on a pullback directory")
    p.add_argument("pullback", help="pullback directory (manifest + frames)")
    p.add_argument("--out", required=True, help="results JSON path")
    p.add_argument("--masks", help="annotation JSON providing lipid arcs/masks (and lumen)")
    p.add_argument("--baseline", action="store_true",
                   help="use the built-in attenuation baseline classifier")
    p.add_argument("--threads", type=int, default=None,
                   help="frame-parallel workers (default: available parallelism)")
    p.add_argument("--timing-out", help="also write the timing report to this path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("phantom", help="generate a synthetic pullback with ground truth")
    p.add_argument("--preset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--frames", type=int, default=None, help="override frame count")
    p.add_argument("--speckle", type=float, default=None, help="override speckle sigma")
    p.add_argument("--format", choices=("png", "raw"), default="png")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("eval", help="score predicted lipid labels against truth")
    p.add_argument("pred", help="results JSON or annotation JSON")
    p.add_argument("truth", help="truth annotation JSON")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="agreement stats between two results documents")
    p.add_argument("results_a")
    p.add_argument("results_b")
    p.add_argument("--out", required=True, help="agreement JSON path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-map", help="render the pullback thickness map image")
    p.add_argument("results", help="results JSON")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--range", default="0:300", help="display range in um, LO:HI")
    p.add_argument("--bins", type=int, default=360)
    p.set_defaults(func=cmd_export_map)

    p = sub.add_parser("serve", help="run the analyst review service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--data-root", help="directory of pullback directories "
                                       "(or env OCTCAP_DATA_ROOT)")
    p.add_argument("--ui-dir", help="built edit-ui bundle to host at / "
                                    "(default: frontend/dist when present)")
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (store.MissingManifest, store.DimensionMismatch, store.UnsupportedVersion,
            store.SchemaViolation, FileNotFoundError) as exc:
        print(f"octcap: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
