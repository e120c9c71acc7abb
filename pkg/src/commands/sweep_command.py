"""Sweep command implementation."""

import argparse
from typing import Any, Dict, List

from ..bottleneck import load_train_config
from ..experiment import SWEEP_WEIGHTS, format_table, sweep, write_rows
from .base import (
    Command,
    ExitCode,
    accountant_config,
    add_clip_arguments,
    add_privacy_arguments,
    clip_config,
    output_dir,
    workers,
)


def parse_weights(text: str) -> List[float]:
    weights = [float(item) for item in text.split(",") if item.strip()]

    if not weights or any(weight < 0.0 for weight in weights):
        raise argparse.ArgumentTypeError("weights must be a nonempty list of nonnegative reals")

    return weights


class SweepCommand(Command):
    """Privacy-utility frontier over the regularizer weight."""

    @property
    def name(self) -> str:
        return "sweep"

    @property
    def help_args(self) -> str:
        return "<train-config> [--weights w1,w2,...] [--seed N] [--out DIR]"

    @property
    def help(self) -> str:
        return "Run clipped and unclipped twins for each regularizer weight"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("train_config", help="training configuration file")
        parser.add_argument(
            "--weights",
            type=parse_weights,
            default=list(SWEEP_WEIGHTS),
            help="comma-separated lambda_g = lambda_d values",
        )
        parser.add_argument("--seed", type=int, help="overrides the configured seed")
        add_clip_arguments(parser)
        add_privacy_arguments(parser, lam=False, pairs=False)
        parser.add_argument("--out", default=".", help="directory for sweep.csv")

    def execute(self, args: argparse.Namespace, context: Dict[str, Any]) -> int:
        cfg = load_train_config(args.train_config)

        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)

        rows = sweep(
            cfg,
            args.weights,
            clip=clip_config(args, context),
            accountant=accountant_config(args, context, cfg.lam),
            workers=workers(context),
        )

        with open(output_dir(args.out) / "sweep.csv", "w", encoding="utf-8") as f:
            write_rows(rows, f)

        print(format_table(rows), end="")

        return ExitCode.OK
