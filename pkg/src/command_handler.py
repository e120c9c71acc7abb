"""Command handler for command-line invocations."""

import argparse
import logging
import sys
import traceback
from typing import Any, Dict, List, NoReturn, Optional

import yaml

from .accountant import EmptyReportError, InfeasiblePairsError
from .bottleneck import TrainingDivergedError
from .commands import (
    AnalyzeCommand,
    BudgetCommand,
    ClipCommand,
    Command,
    DemoCommand,
    ExitCode,
    PairwiseCommand,
    PresetsCommand,
    SweepCommand,
    TrainToyCommand,
)

PROG = "renyi-clip"


class UsageError(Exception):
    """Command line does not match the declared arguments."""

    def __init__(self, message: str, command: Optional[str] = None):
        self.command = command

        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        command = self.prog.split()[-1] if self.prog != PROG else None

        raise UsageError(message, command)


class CommandHandler:
    """Handler for subcommands."""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        """
        Initialize command handler.

        Args:
            config: Configuration dictionary
        """
        self.config = config or {}
        self.commands: Dict[str, Command] = {}
        self._register_commands()
        self.parser = self._build_parser()

    def _register_commands(self) -> None:
        """Register available commands."""
        command_instances = [
            AnalyzeCommand(),
            PairwiseCommand(),
            BudgetCommand(),
            ClipCommand(),
            TrainToyCommand(),
            DemoCommand(),
            SweepCommand(),
            PresetsCommand(),
        ]

        for cmd in command_instances:
            self.commands[cmd.name] = cmd

    def _build_parser(self) -> argparse.ArgumentParser:
        parser = _Parser(prog=PROG, description="Renyi divergence audit and clipping of Dirichlet-Process posteriors")
        parser.add_argument("--config", default="config.json", help="application configuration file")
        parser.add_argument("--log-level", help="overrides the configured log level")

        subparsers = parser.add_subparsers(dest="command", required=True, metavar="command", parser_class=_Parser)

        for cmd in self.commands.values():
            cmd.configure(subparsers.add_parser(cmd.name, help=cmd.help, description=cmd.help))

        return parser

    def _get_context(self) -> Dict[str, Any]:
        """Get context dictionary for command execution."""
        return {"config": self.config}

    def _print_usage(self, command: Optional[str]) -> None:
        cmd = self.commands.get(command or "")

        if cmd is not None:
            print(f"Usage: {PROG} {cmd.name} {cmd.help_args}".rstrip(), file=sys.stderr)
        else:
            print(f"Usage: {PROG} [--config FILE] [--log-level LEVEL] <{'|'.join(self.commands)}> ...", file=sys.stderr)

    def process_command(self, argv: List[str]) -> int:
        """
        Parse and execute one command line.

        Args:
            argv: Arguments without the program name

        Returns:
            Exit code: 0 success, 1 input error, 2 infeasible privacy analysis, 3 training abort
        """
        try:
            args = self.parser.parse_args(argv)
        except UsageError as e:
            print(f"Error: {e}", file=sys.stderr)
            self._print_usage(e.command)

            return ExitCode.INPUT_ERROR
        except SystemExit as e:
            # --help
            return int(e.code or 0)

        command = args.command

        try:
            return int(self.commands[command].execute(args, self._get_context()))
        except TrainingDivergedError as e:
            logging.error("Abort training: %s", e)
            print(f"Error: {e}", file=sys.stderr)

            return ExitCode.TRAINING_ABORTED
        except (InfeasiblePairsError, EmptyReportError) as e:
            logging.error("Fail to compute budget: %s", e)
            print(f"Error: {e}", file=sys.stderr)

            return ExitCode.INFEASIBLE
        except (OSError, ValueError, KeyError, yaml.YAMLError) as e:
            logging.error("Fail to execute %s: %s", command, e)
            logging.debug("%s", traceback.format_exc())
            print(f"Error: {e}", file=sys.stderr)
            self._print_usage(command)

            return ExitCode.INPUT_ERROR

