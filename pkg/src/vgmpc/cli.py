"""Command-line entry point: train / sweep / bench / check."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config, with_overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vgmpc",
        description="Value-guided MPC: critic training and evaluation runs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("train", "train a critic; writes checkpoint + training curve"),
            ("sweep", "model-mismatch sweep over plant time constants"),
            ("bench", "controller benchmark across tracks")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed(s)")
        p.add_argument("--out", default=None, help="override output directory")
    sub.add_parser("check", help="run the built-in oracle/property suites")
    return parser


def _load(args) -> "ExperimentConfig":
    cfg = load_config(args.config)
    return with_overrides(cfg, seed=args.seed, output_dir=args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "check":
        from .checks import run_checks
        return 0 if run_checks(verbose_print=print) else 1
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    from . import experiments
    if args.command == "train":
        _, ckpt = experiments.run_training_experiment(cfg, force=True)
        print(f"checkpoint written: {ckpt}")
    elif args.command == "sweep":
        summaries = experiments.run_mismatch_sweep(cfg)
        _print_summary(summaries)
    elif args.command == "bench":
        summaries = experiments.run_benchmark(cfg)
        _print_summary(summaries)
    return 0


def _print_summary(summaries) -> None:
    for s in summaries:
        flag = " (aborted)" if s.aborted else ""
        print(f"{s.controller:12s} {s.track:10s} tau={s.tau:g} seed={s.seed} "
              f"reward={s.cumulative_reward:+.3f} "
              f"progress={s.final_progress:.2f}{flag}")


if __name__ == "__main__":
    sys.exit(main())
