"""Pairwise command implementation."""

import argparse
import logging
from typing import Any, Dict

from ..divergence import pairwise_report, write_report
from ..posterior import load_dataset
from .base import Command, ExitCode, add_privacy_arguments, pairs_mode, workers


class PairwiseCommand(Command):
    """Pairwise divergence report without budget conversion."""

    @property
    def name(self) -> str:
        return "pairwise"

    @property
    def help_args(self) -> str:
        return "<dataset> [--lambda L] [--pairs P] [--out FILE]"

    @property
    def help(self) -> str:
        return "Write the pairwise divergence report of a dataset"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("dataset", help="posterior dataset file")
        add_privacy_arguments(parser, accounting=False)
        parser.add_argument("--out", default="report.csv", help="report file")

    def execute(self, args: argparse.Namespace, context: Dict[str, Any]) -> int:
        with open(args.dataset, "rb") as f:
            ds = load_dataset(f)

        if args.lam is not None:
            ds = ds.with_lambda(args.lam)

        report = pairwise_report(ds, pairs_mode(args, context), workers(context))

        with open(args.out, "w", encoding="utf-8") as f:
            write_report(report, f)

        logging.info("Write report to %s", args.out)

        print(f"pairs      : {len(report.pairs)}")
        print(f"RD max     : {report.rd_max!r}")
        print(f"RD avg     : {report.rd_avg!r}")
        print(f"infeasible : {report.n_infeasible}")

        return ExitCode.INFEASIBLE if report.n_infeasible else ExitCode.OK
