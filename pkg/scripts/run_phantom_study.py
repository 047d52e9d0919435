#!/usr/bin/env python3
"""Desk-scale phantom study: generate the four lesion presets, run the full
pipeline with both lipid sources, score the baseline classifier against
ground truth, and render the pullback thickness maps.
"""
import argparse
import json
import subprocess
import sys
from pathlib import Path

PRESETS = ("tcfa_short", "tcfa_long", "stable_short", "stable_long")


def run(*argv):
    cmd = [sys.executable, "-m", "octcap.cli", *argv]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(f"command failed: {' '.join(cmd)}")
    return proc.stdout


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="phantom_study")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)

    rows = []
    for name in PRESETS:
        d = work / name
        run("phantom", "--preset", name, "--seed", str(args.seed), "--out", str(d))
        truth = d / "annotations.json"
        res_gt = work / f"{name}_results_gtmask.json"
        res_bl = work / f"{name}_results_baseline.json"
        run("analyze", str(d), "--masks", str(truth), "--out", str(res_gt))
        run("analyze", str(d), "--baseline", "--out", str(res_bl))
        metrics = work / f"{name}_eval.json"
        run("eval", str(res_bl), str(truth), "--out", str(metrics))
        agree = work / f"{name}_compare.json"
        run("compare", str(res_gt), str(res_bl), "--out", str(agree))
        run("export-map", str(res_gt), "--out", str(work / f"{name}_map.png"),
            "--range", "0:300")

        scores = json.loads(metrics.read_text())["scores"]
        cmp_doc = json.loads(agree.read_text())["measurements"]
        summary = json.loads(res_gt.read_text())["summary"]
        rows.append((name, scores, cmp_doc, summary))

    print(f"{'preset':<14} {'dice':>6} {'sens':>6} {'spec':>6} "
          f"{'angle bias':>11} {'min-thick bias':>15} {'global min um':>14}")
    for name, scores, cmp_doc, summary in rows:
        ang = cmp_doc["lipid_angle_deg"].get("bias", float("nan"))
        thk = cmp_doc["min_thickness_um"].get("bias", float("nan"))
        print(f"{name:<14} {scores['dice']:>6.3f} {scores['sensitivity']:>6.3f} "
              f"{scores['specificity']:>6.3f} {ang:>11.2f} {thk:>15.2f} "
              f"{summary['global_min_thickness_um']:>14.1f}")
    print(f"\nartifacts in {work}/")


if __name__ == "__main__":
    main()
