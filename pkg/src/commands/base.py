"""Base command class and option helpers shared by the subcommands."""

import argparse
import logging
from abc import ABC, abstractmethod
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, Optional

from ..accountant import AccountantConfig, AccountingMode
from ..clipping import ClipConfig, load_clip_config
from ..divergence import PairsMode

PROJECT_ROOT = Path(__file__).parent.parent.parent


class ExitCode(IntEnum):
    OK = 0
    INPUT_ERROR = 1
    INFEASIBLE = 2
    TRAINING_ABORTED = 3


class Command(ABC):
    """Base class for commands."""

    @property
    @abstractmethod
    def name(self) -> str:
        """Command name."""
        ...

    @property
    @abstractmethod
    def help_args(self) -> str:
        """Arguments format for the command."""
        ...

    @property
    @abstractmethod
    def help(self) -> str:
        """Help text for the command."""
        ...

    @abstractmethod
    def configure(self, parser: argparse.ArgumentParser) -> None:
        """
        Declare the command arguments.

        Args:
            parser: Subcommand parser
        """
        ...

    @abstractmethod
    def execute(self, args: argparse.Namespace, context: Dict[str, Any]) -> int:
        """
        Execute the command.

        Args:
            args: Parsed arguments
            context: Context with the application config

        Returns:
            Process exit code
        """
        ...


def resolve_path(path: str) -> Path:
    """Resolve a path from the application config relative to the project root."""
    resolved = Path(path)

    if not resolved.is_absolute():
        resolved = PROJECT_ROOT / resolved

    return resolved


def privacy_section(context: Dict[str, Any]) -> Dict[str, Any]:
    return context.get("config", {}).get("privacy", {})


def add_privacy_arguments(
    parser: argparse.ArgumentParser,
    lam: bool = True,
    accounting: bool = True,
    pairs: bool = True,
) -> None:
    if lam:
        parser.add_argument("--lambda", dest="lam", type=float, help="Renyi order, must exceed 1")

    if accounting:
        parser.add_argument("--delta", type=float, help="failure probability of the budget")
        parser.add_argument("--mode", choices=[mode.value for mode in AccountingMode], help="budget statistic")

    if pairs:
        parser.add_argument("--pairs", choices=[mode.value for mode in PairsMode], help="ordered pairs to evaluate")


def add_clip_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--clip-config", help="clip configuration file (.json or .yaml)")
    group.add_argument("--preset", help="clipping preset name, e.g. bert-base/mrpc")


def pairs_mode(args: argparse.Namespace, context: Dict[str, Any]) -> PairsMode:
    return PairsMode(args.pairs or privacy_section(context).get("pairs", PairsMode.VS_ALL_PAIRS.value))


def workers(context: Dict[str, Any]) -> int:
    return int(privacy_section(context).get("workers", 1))


def accountant_config(args: argparse.Namespace, context: Dict[str, Any], lam: float) -> AccountantConfig:
    """Flags first, then the privacy section of the application config."""
    section = privacy_section(context)

    return AccountantConfig(
        lam=lam,
        delta=args.delta if args.delta is not None else float(section.get("delta", 1e-5)),
        mode=AccountingMode(args.mode or section.get("mode", AccountingMode.WORST_CASE.value)),
    )


def clip_config(args: argparse.Namespace, context: Dict[str, Any]) -> Optional[ClipConfig]:
    """Clip configuration selected by --clip-config or --preset, if any."""
    if args.clip_config:
        return load_clip_config(args.clip_config)

    if args.preset:
        section = context.get("config", {}).get("clipping", {})
        presets_path = resolve_path(section["presetsPath"]) if "presetsPath" in section else None

        logging.info("Use clipping preset %s", args.preset)

        return ClipConfig.from_preset(args.preset, presets_path)

    return None


def output_dir(path: str) -> Path:
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)

    return directory
