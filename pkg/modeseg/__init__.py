"""modeseg - water segmentation of SAR backscatter with mode-normalized U-Net and SegNet.

A self-contained numpy stack: a reverse-mode autodiff engine, batch and mode
normalization layers, mini U-Net / SegNet models, segmentation losses and metrics,
a raster tiling pipeline and the training / grid-search / cross-validation harness.
"""

try:
    from importlib.metadata import PackageNotFoundError, version
except ImportError:  # pragma: no cover - for Python <3.10
    from importlib_metadata import PackageNotFoundError, version

try:
    __version__ = version("modeseg")
except PackageNotFoundError:
    # Package is not installed, read version from pyproject.toml
    import re
    from pathlib import Path

    try:
        root = Path(__file__).resolve().parents[1]
        pyproject = root / "pyproject.toml"
        version_pattern = re.compile(r'^version\s*=\s*["\'](.+?)["\']', re.M)
        match = version_pattern.search(pyproject.read_text())
        __version__ = match.group(1) if match else "0.0.0"
    except Exception:  # pragma: no cover - fallback
        __version__ = "0.0.0"

__author__ = "Himasha Herath"
__description__ = "Mode Normalization for U-Net and SegNet water segmentation of SAR imagery"

from typing import Optional, Tuple

from .autodiff import Tensor, gradcheck, no_grad, precision
from .config.profiles import ConfigProfiles
from .config.settings import (
    ConfigBuilder,
    ExperimentConfig,
    LossConfig,
    ModelSpec,
    NormConfig,
    OptimizerConfig,
    TrainConfig,
)
from .core.datapipe import load_tiles, prepare_stratified
from .core.exceptions import (
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
from .core.experiments import compare_normalizations, cross_validate, grid_search, speedup_report
from .core.models import MetricReport, RunRecord
from .core.segnets import SegModel, build_model
from .core.trainer import evaluate, train

# Public API
__all__ = [
    # Engine
    "Tensor",
    "no_grad",
    "precision",
    "gradcheck",
    # Models and training
    "build_model",
    "train",
    "evaluate",
    "grid_search",
    "cross_validate",
    "compare_normalizations",
    "speedup_report",
    "RunRecord",
    "MetricReport",
    # Configuration
    "ExperimentConfig",
    "ConfigBuilder",
    "ConfigProfiles",
    "ModelSpec",
    "NormConfig",
    "TrainConfig",
    "OptimizerConfig",
    "LossConfig",
    # Exceptions
    "ModeSegError",
    "DimensionError",
    "ContractError",
    "NumericalError",
    "ConfigurationError",
    "DataFormatError",
    "DataError",
    "CheckpointError",
    "TrainingError",
    # Convenience functions
    "quick_train",
]


def quick_train(
    profile: str = "smoke", config: Optional[ExperimentConfig] = None
) -> Tuple[SegModel, RunRecord]:
    """Train one model end to end on the profile's data and return it with its record.

    The record carries test-split metrics in ``test_metrics``.

    Example:
        >>> model, record = quick_train("smoke")
        >>> record.stopped_epoch <= record.max_epochs
        True
    """
    config = config or ConfigProfiles.get(profile)
    splits = prepare_stratified(load_tiles(config.data), config.data)
    model = build_model(config.model, seed=config.train.seed)
    record = train(model, splits.train, splits.val, config.train, config.optimizer, config.loss)
    record.test_metrics = evaluate(model, splits.test, config.train.batch_size)
    return model, record
