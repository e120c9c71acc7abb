"""Configuration loader module."""

import json
import logging
from typing import Any, Dict

DEFAULT_CONFIG: Dict[str, Any] = {
    "privacy": {
        "lambda": 1.1,
        "delta": 1e-5,
        "mode": "worst_case",
        "pairs": "vs_all_pairs",
        "workers": 4,
    },
    "clipping": {
        "presetsPath": "./presets/clipping.yaml",
        "defaultPreset": "bert-base/mrpc",
    },
    "logging": {
        "level": "INFO",
        "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    },
}


class ConfigLoader:
    """Load application configuration from JSON file."""

    @staticmethod
    def load(config_path: str = "config.json") -> Dict[str, Any]:
        """
        Load configuration from JSON file.

        Sections missing from the file keep their defaults; keys inside a present section override defaults one by one.

        Args:
            config_path: Path to the configuration file

        Returns:
            Configuration dictionary

        Raises:
            FileNotFoundError: If the file does not exist
            json.JSONDecodeError: If the file is not valid JSON
        """
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                loaded = json.load(f)

            logging.info("Load configuration from %s", config_path)
        except FileNotFoundError:
            logging.error("Configuration file not found: %s", config_path)

            raise
        except json.JSONDecodeError as e:
            logging.error("Invalid JSON in configuration file: %s", e)

            raise

        config = {section: dict(values) for section, values in DEFAULT_CONFIG.items()}

        for section, values in loaded.items():
            if isinstance(values, dict) and section in config:
                config[section].update(values)
            else:
                config[section] = values

        return config
