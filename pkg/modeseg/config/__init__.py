"""Configuration system for modeseg."""

from .profiles import ConfigProfiles
from .settings import (
    ConfigBuilder,
    DataConfig,
    ExperimentConfig,
    GridConfig,
    LossConfig,
    ModelSpec,
    NormConfig,
    OptimizerConfig,
    SynthConfig,
    TrainConfig,
    get_default_config,
    set_default_config,
)

__all__ = [
    "ExperimentConfig",
    "ConfigBuilder",
    "ConfigProfiles",
    "NormConfig",
    "ModelSpec",
    "LossConfig",
    "OptimizerConfig",
    "TrainConfig",
    "SynthConfig",
    "DataConfig",
    "GridConfig",
    "get_default_config",
    "set_default_config",
]
