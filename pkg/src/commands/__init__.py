"""Subcommands of the command-line interface."""

from .analyze_command import AnalyzeCommand
from .base import Command, ExitCode
from .budget_command import BudgetCommand
from .clip_command import ClipCommand
from .demo_command import DemoCommand
from .pairwise_command import PairwiseCommand
from .presets_command import PresetsCommand
from .sweep_command import SweepCommand
from .train_toy_command import TrainToyCommand

__all__ = [
    "Command",
    "ExitCode",
    "AnalyzeCommand",
    "BudgetCommand",
    "ClipCommand",
    "DemoCommand",
    "PairwiseCommand",
    "PresetsCommand",
    "SweepCommand",
    "TrainToyCommand",
]
