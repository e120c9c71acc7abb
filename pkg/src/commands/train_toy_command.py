"""Train-toy command implementation."""

import argparse
import json
import logging
from typing import Any, Dict

from ..accountant import audit_summary, budget_to_dict, to_budget
from ..bottleneck import accuracy, extract_dataset, load_train_config, save_model, train, write_trace
from ..divergence import pairwise_report, write_report
from ..posterior import save_dataset
from .base import (
    Command,
    ExitCode,
    accountant_config,
    add_clip_arguments,
    add_privacy_arguments,
    clip_config,
    output_dir,
    pairs_mode,
    workers,
)


class TrainToyCommand(Command):
    """Train the toy bottleneck and audit its held-out posteriors."""

    @property
    def name(self) -> str:
        return "train-toy"

    @property
    def help_args(self) -> str:
        return "<train-config> [--seed N] [--clip-config FILE | --preset NAME] [--out DIR]"

    @property
    def help(self) -> str:
        return "Train the toy bottleneck, then write the model, metrics and privacy report"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("train_config", help="training configuration file")
        parser.add_argument("--seed", type=int, help="overrides the configured seed")
        add_clip_arguments(parser)
        add_privacy_arguments(parser, lam=False)
        parser.add_argument("--out", default="toy_out", help="output directory")

    def execute(self, args: argparse.Namespace, context: Dict[str, Any]) -> int:
        """
        Write model.json, metrics.csv, posteriors.json, report.csv and, when feasible, the budget files.

        Args:
            args: Parsed arguments
            context: Context with the application config

        Returns:
            OK, or INFEASIBLE when the held-out report has infeasible pairs
        """
        cfg = load_train_config(args.train_config)

        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)

        clip = clip_config(args, context)

        if clip is not None:
            cfg = cfg.replace(clip=clip)

        run = train(cfg)
        out = output_dir(args.out)

        with open(out / "model.json", "w", encoding="utf-8") as f:
            save_model(run.model, f)

        with open(out / "metrics.csv", "w", encoding="utf-8") as f:
            write_trace(run.trace, f)

        ds = extract_dataset(run.model, run.task.x_test[: cfg.privacy_examples], cfg)

        with open(out / "posteriors.json", "w", encoding="utf-8") as f:
            save_dataset(ds, f)

        report = pairwise_report(ds, pairs_mode(args, context), workers(context))

        with open(out / "report.csv", "w", encoding="utf-8") as f:
            write_report(report, f)

        held_out = accuracy(run.model, run.task.x_test, run.task.y_test, cfg)

        print(f"train accuracy    : {run.trace[-1].accuracy:.4f}")
        print(f"held-out accuracy : {held_out:.4f}")

        if report.n_infeasible:
            logging.error("Omit budget: %d infeasible pairs", report.n_infeasible)

            print(f"infeasible pairs  : {report.n_infeasible}")

            return ExitCode.INFEASIBLE

        budget = to_budget(report, accountant_config(args, context, cfg.lam))
        summary = audit_summary(report, budget)

        with open(out / "budget.txt", "w", encoding="utf-8") as f:
            f.write(summary)

        with open(out / "budget.json", "w", encoding="utf-8") as f:
            f.write(json.dumps(budget_to_dict(report, budget), indent=2) + "\n")

        print(summary, end="")

        return ExitCode.OK
