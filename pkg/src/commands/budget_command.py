"""Budget command implementation."""

import argparse
import json
import sys
from typing import Any, Dict

from ..accountant import audit_summary, budget_to_dict, to_budget
from ..divergence import load_report
from .base import Command, ExitCode, accountant_config, add_privacy_arguments, output_dir


class BudgetCommand(Command):
    """Convert a saved pairwise report into a privacy budget."""

    @property
    def name(self) -> str:
        return "budget"

    @property
    def help_args(self) -> str:
        return "<report.csv> [--lambda L] [--delta D] [--mode M] [--out DIR]"

    @property
    def help(self) -> str:
        return "Convert a pairwise report into an (epsilon, delta) budget"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("report", help="report written by analyze or pairwise")
        add_privacy_arguments(parser, pairs=False)
        parser.add_argument("--out", help="directory for budget.txt and budget.json")

    def execute(self, args: argparse.Namespace, context: Dict[str, Any]) -> int:
        with open(args.report, "r", encoding="utf-8") as f:
            report = load_report(f)

        if report.n_infeasible:
            print(f"Budget undefined: {report.n_infeasible} infeasible pairs", file=sys.stderr)

            return ExitCode.INFEASIBLE

        lam = args.lam if args.lam is not None else report.lam
        budget = to_budget(report, accountant_config(args, context, lam))
        summary = audit_summary(report, budget)

        if args.out:
            out = output_dir(args.out)

            with open(out / "budget.txt", "w", encoding="utf-8") as f:
                f.write(summary)

            with open(out / "budget.json", "w", encoding="utf-8") as f:
                f.write(json.dumps(budget_to_dict(report, budget), indent=2) + "\n")

        print(summary, end="")

        return ExitCode.OK
