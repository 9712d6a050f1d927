"""Command-line entry point: ``drlsched generate | train | evaluate | compare``."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import harness
from .config import load_config
from .errors import CheckpointError, ConfigError, JobsetParseError, NumericError, ParameterError


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "iterations", None) is not None:
        cfg = cfg.with_iterations(args.iterations)
    if getattr(args, "num_jobsets", None) is not None and args.command in ("evaluate", "compare"):
        cfg = dataclasses.replace(cfg, eval_jobsets=args.num_jobsets)
    if args.out_dir is not None:
        cfg = dataclasses.replace(cfg, output_dir=args.out_dir)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drlsched", description="DRL multi-resource job scheduler")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default="single-machine",
                       help="config file or preset name (single-machine, two-machine, toy)")
        p.add_argument("--seed", type=int, help="override workload and training seed")
        p.add_argument("--out-dir", help="output directory")
        return p

    gen = common(sub.add_parser("generate", help="write random jobsets to files"))
    gen.add_argument("--num-jobsets", type=int, default=10)

    train = common(sub.add_parser("train", help="train a policy"))
    train.add_argument("--iterations", type=int)
    train.add_argument("--resume", action="store_true", help="continue from <out-dir>/latest.ckpt")
    train.add_argument("--checkpoint", help="resume from this checkpoint file")

    ev = common(sub.add_parser("evaluate", help="greedy evaluation of a checkpoint"))
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--num-jobsets", type=int)

    cmp_ = common(sub.add_parser("compare", help="compare DRL with heuristics on held-out jobsets"))
    cmp_.add_argument("--checkpoint", help="trained policy (omit to compare heuristics only)")
    cmp_.add_argument("--num-jobsets", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "generate":
            harness.cmd_generate(cfg, args.num_jobsets, cfg.output_dir)
        elif args.command == "train":
            harness.cmd_train(cfg, resume=args.resume, checkpoint=args.checkpoint)
        elif args.command == "evaluate":
            harness.cmd_evaluate(cfg, args.checkpoint)
        else:
            harness.cmd_compare(cfg, args.checkpoint)
    except (ConfigError, ParameterError, JobsetParseError, CheckpointError, NumericError,
            OSError) as exc:
        print(f"drlsched: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, (ConfigError, ParameterError)) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
