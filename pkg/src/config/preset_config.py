"""
Scale presets and experiment configuration loading
"""
import json
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import ValidationError

from src.config.experiment_config import ExperimentConfig
from src.exceptions import ConfigError


class Preset(Enum):
    DESK = "desk"
    FULL = "full"
    SMOKE = "smoke"


class ConfigManager:
    """Manages scale presets layered over experiment configurations"""

    _presets: Dict[Preset, Dict[str, Dict[str, Any]]] = {
        Preset.DESK: {
            "counts": {
                "n_train_datasets": 400,
                "n_val_datasets": 200,
                "n_test_datasets": 100,
                "dataset_size": 1000,
                "num_targets": 10,
                "repetitions": 1,
            },
            "search": {"generations": 50},
        },
        Preset.FULL: {
            "counts": {
                "n_train_datasets": 2000,
                "n_val_datasets": 1000,
                "n_test_datasets": 500,
                "dataset_size": 8000,
                "num_targets": 100,
                "repetitions": 5,
            },
            "search": {"generations": 200, "population": 100},
        },
        Preset.SMOKE: {
            "counts": {
                "n_train_datasets": 40,
                "n_val_datasets": 20,
                "n_test_datasets": 20,
                "dataset_size": 200,
                "num_targets": 2,
                "repetitions": 1,
            },
            "search": {"generations": 5, "population": 10, "elites": 2, "m": 10},
        },
    }

    @classmethod
    def get_preset(cls, name: str) -> Dict[str, Dict[str, Any]]:
        """Get overrides for the named preset"""
        preset = Preset(name.lower())
        return cls._presets[preset]

    @classmethod
    def apply_preset(cls, config: ExperimentConfig, name: str) -> ExperimentConfig:
        """Return a copy of config with the preset's sections overridden"""
        data = config.model_dump()
        for section, overrides in cls.get_preset(name).items():
            data[section].update(overrides)
        return cls._validate(data)

    @classmethod
    def get_current_preset(cls) -> Optional[str]:
        """Preset named by SNOUTBENCH_PRESET, or None when unset"""
        return os.environ.get("SNOUTBENCH_PRESET") or None

    @classmethod
    def load_config(cls, path: Union[str, Path]) -> ExperimentConfig:
        """Load and validate a JSON experiment configuration"""
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
        return cls._validate(data)

    @classmethod
    def validate_config(cls, config: ExperimentConfig) -> bool:
        """Check cross-section constraints a single model cannot see"""
        counts = config.counts
        if config.dataset.synthetic is not None:
            available = len(config.dataset.synthetic.cardinalities)
            if counts.known_attr_count > available:
                raise ConfigError(
                    f"known_attr_count {counts.known_attr_count} exceeds {available} synthetic attributes"
                )
        if config.scenario == "exact-but-one" and counts.dataset_size < 2:
            raise ConfigError("EXACT-BUT-ONE needs datasets of at least two records")
        return True

    @classmethod
    def _validate(cls, data: Dict[str, Any]) -> ExperimentConfig:
        try:
            config = ExperimentConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(str(e)) from e
        cls.validate_config(config)
        return config
