"""Core functionality for modeseg."""

from .exceptions import (
    CheckpointError,
    ConfigurationError,
    ContractError,
    DataError,
    DataFormatError,
    DimensionError,
    ModeSegError,
    NumericalError,
    TrainingError,
)

__all__ = [
    "ModeSegError",
    "DimensionError",
    "ContractError",
    "NumericalError",
    "ConfigurationError",
    "DataFormatError",
    "DataError",
    "CheckpointError",
    "TrainingError",
]
