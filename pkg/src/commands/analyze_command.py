"""Analyze command implementation."""

import argparse
import json
import logging
import sys
from typing import Any, Dict

from ..accountant import audit_summary, budget_to_dict, to_budget
from ..divergence import pairwise_report, write_report
from ..posterior import load_dataset
from .base import (
    Command,
    ExitCode,
    accountant_config,
    add_privacy_arguments,
    output_dir,
    pairs_mode,
    workers,
)


class AnalyzeCommand(Command):
    """Pairwise report plus privacy budget for a posterior dataset."""

    @property
    def name(self) -> str:
        return "analyze"

    @property
    def help_args(self) -> str:
        return "<dataset> [--lambda L] [--delta D] [--mode M] [--pairs P] [--out DIR]"

    @property
    def help(self) -> str:
        return "Write the pairwise divergence report and the privacy budget of a dataset"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("dataset", help="posterior dataset file")
        add_privacy_arguments(parser)
        parser.add_argument("--out", default=".", help="output directory")

    def execute(self, args: argparse.Namespace, context: Dict[str, Any]) -> int:
        """
        Write report.csv and, when every pair is feasible, budget.txt and budget.json.

        Args:
            args: Parsed arguments
            context: Context with the application config

        Returns:
            OK, or INFEASIBLE when the budget is undefined
        """
        with open(args.dataset, "rb") as f:
            ds = load_dataset(f)

        logging.info("Load dataset with %d examples from %s", len(ds.examples), args.dataset)

        if args.lam is not None:
            ds = ds.with_lambda(args.lam)

        report = pairwise_report(ds, pairs_mode(args, context), workers(context))
        out = output_dir(args.out)

        with open(out / "report.csv", "w", encoding="utf-8") as f:
            write_report(report, f)

        if report.n_infeasible:
            for pair in report.infeasible_pairs():
                print(f"Infeasible pair ({pair.id_q}, {pair.id_qp}): {pair.reason}", file=sys.stderr)

            logging.error("Omit budget: %d infeasible pairs", report.n_infeasible)

            return ExitCode.INFEASIBLE

        budget = to_budget(report, accountant_config(args, context, ds.lam))
        summary = audit_summary(report, budget)

        with open(out / "budget.txt", "w", encoding="utf-8") as f:
            f.write(summary)

        with open(out / "budget.json", "w", encoding="utf-8") as f:
            f.write(json.dumps(budget_to_dict(report, budget), indent=2) + "\n")

        print(summary, end="")

        return ExitCode.OK
