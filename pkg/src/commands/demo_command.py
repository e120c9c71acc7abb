"""Demo command implementation."""

import argparse
from typing import Any, Dict, List

from ..bottleneck import TrainConfig, load_train_config
from ..experiment import demo, format_table, write_rows
from .base import (
    Command,
    ExitCode,
    accountant_config,
    add_clip_arguments,
    add_privacy_arguments,
    clip_config,
    output_dir,
    privacy_section,
    workers,
)


def parse_ints(text: str) -> List[int]:
    return [int(item) for item in text.split(",") if item.strip()]


class DemoCommand(Command):
    """Clipped versus unclipped twin runs on the synthetic task."""

    @property
    def name(self) -> str:
        return "demo"

    @property
    def help_args(self) -> str:
        return "[train-config] [--seeds 0,1,2] [--clip-config FILE | --preset NAME] [--out DIR]"

    @property
    def help(self) -> str:
        return "Train clipped and unclipped twins per seed and print the comparison table"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("train_config", nargs="?", help="training configuration file, built-in defaults if omitted")
        parser.add_argument("--seeds", type=parse_ints, default=[0, 1, 2], help="comma-separated seeds")
        add_clip_arguments(parser)
        add_privacy_arguments(parser, lam=False, pairs=False)
        parser.add_argument("--out", help="directory for demo.csv")

    def execute(self, args: argparse.Namespace, context: Dict[str, Any]) -> int:
        if args.train_config:
            cfg = load_train_config(args.train_config)
        else:
            cfg = TrainConfig(lam=float(privacy_section(context).get("lambda", 1.1)))

        rows = demo(
            cfg,
            args.seeds,
            clip=clip_config(args, context),
            accountant=accountant_config(args, context, cfg.lam),
            workers=workers(context),
        )

        print(format_table(rows), end="")

        if args.out:
            with open(output_dir(args.out) / "demo.csv", "w", encoding="utf-8") as f:
                write_rows(rows, f)

        return ExitCode.OK
