#!/usr/bin/env python3
"""
Renyi divergence audit application.
Binds posterior auditing, clipping and the toy bottleneck experiments into one command line.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .command_handler import CommandHandler
from .config_loader import ConfigLoader

DEFAULT_CONFIG_PATH = "config.json"
DEFAULT_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class RenyiClip:
    """Command-line application."""

    def __init__(self, config_path: str = DEFAULT_CONFIG_PATH, log_level: Optional[str] = None):
        # Setup basic logging first
        logging.basicConfig(level=logging.INFO, format=DEFAULT_LOG_FORMAT, stream=sys.stderr, force=True)

        # Default config lives in the project root
        if config_path == DEFAULT_CONFIG_PATH and not Path(config_path).is_file():
            project_root = Path(__file__).parent.parent
            config_path = str(project_root / config_path)

        self.config = ConfigLoader.load(config_path)
        self._setup_logging(log_level)  # Reconfigure with config settings
        self.command_handler = CommandHandler(config=self.config)

    def run(self, argv: List[str]) -> int:
        """Execute one command line and return its exit code."""
        return self.command_handler.process_command(argv)

    def _setup_logging(self, log_level: Optional[str]) -> None:
        """Configure logging based on config and the --log-level flag."""
        log_config = self.config.get("logging", {})
        level_name = (log_level or log_config.get("level", "INFO")).upper()
        level = getattr(logging, level_name, None)

        if not isinstance(level, int):
            raise ValueError(f"Invalid log level '{level_name}'")

        format_str = log_config.get("format", DEFAULT_LOG_FORMAT)

        logging.basicConfig(level=level, format=format_str, stream=sys.stderr, force=True)


def run(argv: Optional[List[str]] = None) -> int:
    """
    Run the application in-process.

    Args:
        argv: Arguments without the program name, defaults to sys.argv[1:]

    Returns:
        Exit code
    """
    argv = list(sys.argv[1:] if argv is None else argv)

    globals_parser = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    globals_parser.add_argument("--config", default=DEFAULT_CONFIG_PATH)
    globals_parser.add_argument("--log-level")
    known, _ = globals_parser.parse_known_args(argv)

    try:
        app = RenyiClip(known.config, known.log_level)
    except (OSError, json.JSONDecodeError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)

        return 1

    return app.run(argv)


def main():
    """Entry point for the application."""
    try:
        sys.exit(run())
    except KeyboardInterrupt:
        logging.info("Interrupt application")
        sys.exit(130)


if __name__ == "__main__":
    main()
