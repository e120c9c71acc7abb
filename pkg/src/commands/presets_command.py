"""Presets command implementation."""

import argparse
from typing import Any, Dict

from ..clipping import load_presets
from .base import Command, ExitCode, resolve_path


class PresetsCommand(Command):
    """List the clipping presets."""

    @property
    def name(self) -> str:
        return "presets"

    @property
    def help_args(self) -> str:
        return ""

    @property
    def help(self) -> str:
        return "List the clipping presets"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        pass

    def execute(self, args: argparse.Namespace, context: Dict[str, Any]) -> int:
        section = context.get("config", {}).get("clipping", {})
        presets = load_presets(resolve_path(section["presetsPath"]) if "presetsPath" in section else None)

        max_len = max(len(name) for name in presets)

        for name, cfg in sorted(presets.items()):
            guarantee = "guaranteed" if cfg.alpha_margin > 0.0 else "not guaranteed"
            padding = max_len - len(name)
            print(
                f"{name}{' ' * padding} - c_mu={cfg.c_mu:g} alpha=[{cfg.c_alpha_min:g}, {cfg.c_alpha_max:g}] "
                f"lambda={cfg.lam:g} ({guarantee})"
            )

        return ExitCode.OK
