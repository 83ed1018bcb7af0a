"""Configuration and run-directory management for the CLI."""

import json
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from ..config import ConfigBuilder, ConfigProfiles, ExperimentConfig
from .constants import ARTIFACTS, DEFAULT_CONFIG_FILE, RUN_ROOT_ENV
from .exceptions import CLIConfigurationError, CLIOutputError


class ConfigManager:
    """Resolve an ExperimentConfig from file, profile, environment and CLI overrides."""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file
        self.config_path = Path(config_file) if config_file else None

    def load_config(self, profile: Optional[str] = None) -> ExperimentConfig:
        """
        Base configuration: the JSON document when given, else the named profile,
        else the environment-derived default.
        """
        if self.config_path is not None:
            if not self.config_path.exists():
                raise CLIConfigurationError(f"Configuration file not found: {self.config_path}")
            return self._load_from_file()
        if profile is not None:
            return ConfigProfiles.get(profile)
        return ExperimentConfig.from_env()

    def _load_from_file(self) -> ExperimentConfig:
        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                document = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise CLIConfigurationError(f"Failed to read configuration {self.config_path}: {e}")
        return ExperimentConfig.from_dict(document)

    def save_config(self, config: ExperimentConfig, path: Optional[str] = None) -> Path:
        target = Path(path or self.config_file or DEFAULT_CONFIG_FILE)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "w", encoding="utf-8") as f:
                json.dump(config.to_dict(), f, indent=2)
        except OSError as e:
            raise CLIOutputError(f"Failed to save configuration: {e}")
        return target

    @staticmethod
    def apply_overrides(config: ExperimentConfig, overrides: Dict[str, Any]) -> ExperimentConfig:
        """Apply non-None CLI overrides on top of ``config`` through the builder."""
        o = {k: v for k, v in overrides.items() if v is not None}
        builder = ConfigBuilder(config)
        if "arch" in o:
            builder.with_arch(o["arch"])
        if "norm" in o:
            builder.with_norm(o["norm"])
        if "modes" in o:
            builder.with_modes(o["modes"])
        if "depth" in o or "base_channels" in o:
            builder.with_model_size(
                o.get("depth", config.model.depth), o.get("base_channels", config.model.base_channels)
            )
        if "optimizer" in o or "lr" in o:
            builder.with_optimizer(
                o.get("optimizer", config.optimizer.kind), o.get("lr", config.optimizer.learning_rate)
            )
        if "loss" in o:
            builder.with_loss(o["loss"])
        if "dropout" in o:
            builder.with_dropout(o["dropout"])
        if "tile_size" in o:
            builder.with_tile_size(o["tile_size"])
        if "batch_size" in o:
            builder.with_batch_size(o["batch_size"])
        if "epochs" in o:
            builder.with_epochs(o["epochs"])
        if "patience" in o:
            builder.with_patience(o["patience"])
        if "seed" in o:
            builder.with_seed(o["seed"])
        if "image" in o:
            builder.with_data(o["image"], o.get("mask"))
        if "width" in o or "height" in o or "coverage" in o:
            synth = config.data.synth
            builder.with_synthetic_scene(
                o.get("width", synth.width), o.get("height", synth.height), o.get("coverage")
            )
        if "workers" in o:
            builder.with_workers(o["workers"])
        if os.getenv(RUN_ROOT_ENV) and config.run_root == ExperimentConfig().run_root:
            builder.with_run_root(os.environ[RUN_ROOT_ENV])
        try:
            return builder.build()
        except (TypeError, ValueError) as e:
            raise CLIConfigurationError(f"Invalid configuration override: {e}")


class RunDirectory:
    """A fresh directory for one command's artifacts."""

    def __init__(self, path: Path):
        self.path = path

    @classmethod
    def create(cls, run_root: str, command: str, label: str, out: Optional[str] = None) -> "RunDirectory":
        if out is not None:
            path = Path(out)
        else:
            stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
            path = Path(run_root) / f"{command}-{label}-{stamp}"
            suffix = 1
            while path.exists():
                path = Path(run_root) / f"{command}-{label}-{stamp}-{suffix}"
                suffix += 1
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise CLIOutputError(f"Cannot create run directory {path}: {e}")
        return cls(path)

    def artifact(self, key: str) -> Path:
        return self.path / ARTIFACTS[key]

    def write_config(self, config: ExperimentConfig) -> Path:
        target = self.artifact("config")
        target.write_text(json.dumps(config.to_dict(), indent=2), encoding="utf-8")
        return target
