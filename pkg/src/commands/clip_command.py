"""Clip command implementation."""

import argparse
import logging
from typing import Any, Dict

from ..clipping import clip_dataset, feasibility_certificate
from ..posterior import load_dataset, require_valid, save_dataset
from .base import Command, ExitCode, add_clip_arguments, clip_config


class ClipCommand(Command):
    """Clip a posterior dataset and certify the result."""

    @property
    def name(self) -> str:
        return "clip"

    @property
    def help_args(self) -> str:
        return "<dataset> (--clip-config FILE | --preset NAME) [--out FILE]"

    @property
    def help(self) -> str:
        return "Clip every posterior of a dataset and check the feasibility certificate"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("dataset", help="posterior dataset file")
        add_clip_arguments(parser)
        parser.add_argument("--out", default="clipped.json", help="clipped dataset file")

    def execute(self, args: argparse.Namespace, context: Dict[str, Any]) -> int:
        """
        Write the clipped dataset; the exit code reflects the certificate.

        Args:
            args: Parsed arguments
            context: Context with the application config

        Returns:
            OK when the clipped dataset is certified, INFEASIBLE otherwise
        """
        cfg = clip_config(args, context)

        if cfg is None:
            default_preset = context.get("config", {}).get("clipping", {}).get("defaultPreset")

            if not default_preset:
                raise ValueError("clip needs --clip-config or --preset")

            args.preset = default_preset
            cfg = clip_config(args, context)

        with open(args.dataset, "rb") as f:
            ds = load_dataset(f)

        require_valid(ds)

        clipped = clip_dataset(ds, cfg)
        require_valid(clipped)

        with open(args.out, "w", encoding="utf-8") as f:
            save_dataset(clipped, f)

        logging.info("Write clipped dataset to %s", args.out)

        certificate = feasibility_certificate(clipped, cfg)

        for note in certificate.notes:
            logging.warning("%s", note)

        for violation in certificate.constraint_violations + certificate.violations:
            logging.error("%s", violation)

        print(f"examples               : {len(clipped.examples)}")
        print(f"alpha margin           : {certificate.alpha_margin!r}")
        print(f"structurally guaranteed: {'yes' if certificate.structurally_guaranteed else 'no'}")
        print(f"certified              : {'yes' if certificate.certified else 'no'}")

        return ExitCode.OK if certificate.certified else ExitCode.INFEASIBLE
