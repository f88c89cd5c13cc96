"""``plots <experiment> --in <dir> --out <dir>`` entry point."""

from __future__ import annotations

import argparse
import glob
import os
import sys

from .figures import plot_benchmark, plot_mismatch, plot_training
from .io import ArtifactError


def _run_training_figures(in_dir: str, out_dir: str):
    paths, warnings = [], []
    curves = sorted(glob.glob(os.path.join(in_dir, "curve_*.csv")))
    if not curves:
        raise ArtifactError(f"no training curves in {in_dir}")
    for curve in curves:
        stem = os.path.splitext(os.path.basename(curve))[0]
        ckpt = os.path.join(in_dir, stem.replace("curve_", "critic_")
                            + ".json")
        if not os.path.isfile(ckpt):
            warnings.append(f"train: no checkpoint for {stem}")
            continue
        p, w = plot_training(curve, ckpt, out_dir,
                             label=stem.replace("curve_", "training_"))
        paths += p
        warnings += w
    return paths, warnings


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="plots", description="Render figures from vgmpc run artifacts.")
    ap.add_argument("experiment",
                    choices=["mismatch_sweep", "train", "benchmark"])
    ap.add_argument("--in", dest="in_dir", required=True,
                    help="directory holding the experiment's CSV/JSON files")
    ap.add_argument("--out", dest="out_dir", required=True,
                    help="directory for the rendered images")
    args = ap.parse_args(argv)
    try:
        if args.experiment == "mismatch_sweep":
            paths, warnings = plot_mismatch(args.in_dir, args.out_dir)
        elif args.experiment == "train":
            paths, warnings = _run_training_figures(args.in_dir, args.out_dir)
        else:
            paths, warnings = plot_benchmark(args.in_dir, args.out_dir)
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 1 if warnings else 0


if __name__ == "__main__":
    raise SystemExit(main())
