"""Configuration settings for the modeseg package."""

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from ..core.exceptions import ConfigurationError

NORM_KINDS = ("none", "batch", "mode")
ARCHITECTURES = ("unet", "segnet")
LOSS_KINDS = ("dice", "focal", "combined")
OPTIMIZER_KINDS = ("adam", "sgd")
MAX_MODES = 8


@dataclass
class NormConfig:
    """Configuration of the normalization layer placed after every convolution."""

    kind: str = "batch"
    modes: int = 2
    epsilon: float = 1e-5
    momentum: float = 0.1
    em_iters: int = 1
    min_mode_weight: float = 1e-3

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ConfigurationError(
                f"Unknown normalization kind '{self.kind}'",
                config_field="norm.kind",
                expected=" | ".join(NORM_KINDS),
                provided_value=self.kind,
            )
        if not 1 <= self.modes <= MAX_MODES:
            raise ConfigurationError(
                "Mode count out of range",
                config_field="norm.modes",
                expected=f"1 <= modes <= {MAX_MODES}",
                provided_value=self.modes,
            )
        if self.epsilon <= 0:
            raise ConfigurationError(
                "Epsilon must be positive", config_field="norm.epsilon", provided_value=self.epsilon
            )
        if not 0 < self.momentum <= 1:
            raise ConfigurationError(
                "Momentum must lie in (0, 1]",
                config_field="norm.momentum",
                provided_value=self.momentum,
            )
        if self.em_iters < 1:
            raise ConfigurationError(
                "At least one EM iteration is required",
                config_field="norm.em_iters",
                provided_value=self.em_iters,
            )
        if not 0 <= self.min_mode_weight < 1.0 / self.modes:
            raise ConfigurationError(
                "Minimum mode weight must lie in [0, 1/modes)",
                config_field="norm.min_mode_weight",
                provided_value=self.min_mode_weight,
            )


@dataclass
class ModelSpec:
    """Declarative description of a mini U-Net or mini SegNet."""

    arch: str = "unet"
    depth: int = 3
    base_channels: int = 16
    norm: NormConfig = field(default_factory=NormConfig)
    dropout_rate: float = 0.0
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigurationError(
                f"Unknown architecture '{self.arch}'",
                config_field="model.arch",
                expected=" | ".join(ARCHITECTURES),
                provided_value=self.arch,
            )
        if self.depth < 1:
            raise ConfigurationError(
                "Depth must be at least 1", config_field="model.depth", provided_value=self.depth
            )
        if self.base_channels < 1:
            raise ConfigurationError(
                "Base channel count must be positive",
                config_field="model.base_channels",
                provided_value=self.base_channels,
            )
        if not 0 <= self.dropout_rate < 1:
            raise ConfigurationError(
                "Dropout rate must lie in [0, 1)",
                config_field="model.dropout_rate",
                provided_value=self.dropout_rate,
            )
        if self.in_channels != 1 or self.out_channels != 1:
            raise ConfigurationError(
                "Only single-band input and binary output are supported",
                config_field="model.in_channels/out_channels",
                expected="1",
            )

    def check_tile_size(self, tile_size: int) -> None:
        """Raise ConfigurationError when tiles cannot pass through every pooling level."""
        factor = 2**self.depth
        if tile_size < factor or tile_size % factor:
            raise ConfigurationError(
                f"Tile size {tile_size} is not divisible by 2**depth = {factor}",
                config_field="data.tile_size",
                expected=f"a positive multiple of {factor}",
                provided_value=tile_size,
            )

    @property
    def label(self) -> str:
        """Short model name used in reports, e.g. 'U-NetMN' or 'SegNet'."""
        name = "U-Net" if self.arch == "unet" else "SegNet"
        return name + ("MN" if self.norm.kind == "mode" else "")


@dataclass
class LossConfig:
    """Configuration of the training objective."""

    kind: str = "dice"
    alpha: float = 0.25
    focal_gamma: float = 2.0
    smooth_eps: float = 1e-6
    combine_weights: Tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        self.combine_weights = tuple(self.combine_weights)
        if self.kind not in LOSS_KINDS:
            raise ConfigurationError(
                f"Unknown loss '{self.kind}'",
                config_field="loss.kind",
                expected=" | ".join(LOSS_KINDS),
                provided_value=self.kind,
            )
        if not 0 < self.alpha < 1:
            raise ConfigurationError(
                "Alpha must lie in (0, 1)", config_field="loss.alpha", provided_value=self.alpha
            )
        if self.focal_gamma < 0:
            raise ConfigurationError(
                "Focal gamma must be non-negative",
                config_field="loss.focal_gamma",
                provided_value=self.focal_gamma,
            )
        if self.smooth_eps <= 0:
            raise ConfigurationError(
                "Dice smoothing must be positive",
                config_field="loss.smooth_eps",
                provided_value=self.smooth_eps,
            )
        if self.combine_weights != (0.5, 0.5):
            raise ConfigurationError(
                "Combined loss weights are fixed",
                config_field="loss.combine_weights",
                expected="(0.5, 0.5)",
                provided_value=self.combine_weights,
            )


@dataclass
class OptimizerConfig:
    """Configuration of the parameter update rule."""

    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.0

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigurationError(
                f"Unknown optimizer '{self.kind}'",
                config_field="optimizer.kind",
                expected=" | ".join(OPTIMIZER_KINDS),
                provided_value=self.kind,
            )
        if self.learning_rate <= 0:
            raise ConfigurationError(
                "Learning rate must be positive",
                config_field="optimizer.learning_rate",
                provided_value=self.learning_rate,
            )


@dataclass
class TrainConfig:
    """Configuration of the training loop and early stopping."""

    batch_size: int = 32
    max_epochs: int = 60
    patience: int = 5
    monitor: str = "val_loss"
    restore_best: bool = True
    min_delta: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(
                "Batch size must be at least 1",
                config_field="train.batch_size",
                provided_value=self.batch_size,
            )
        if self.patience < 1:
            raise ConfigurationError(
                "Patience must be at least 1",
                config_field="train.patience",
                provided_value=self.patience,
            )
        if self.max_epochs < 1:
            raise ConfigurationError(
                "At least one epoch is required",
                config_field="train.max_epochs",
                provided_value=self.max_epochs,
            )
        if self.monitor != "val_loss":
            raise ConfigurationError(
                "Only validation loss can be monitored",
                config_field="train.monitor",
                expected="val_loss",
                provided_value=self.monitor,
            )


@dataclass
class SynthConfig:
    """Parameters of the bimodal SAR-like scene generator (backscatter in dB)."""

    width: int = 512
    height: int = 512
    water_mean: float = -20.0
    water_std: float = 2.5
    land_mean: float = -7.0
    land_std: float = 3.5
    coverage: float = 0.35
    smoothness: float = 8.0
    looks: int = 0
    nodata_margin: int = 0
    nodata_value: float = -9999.0
    clip_min: float = -48.85
    clip_max: float = 11.79
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.coverage <= 1:
            raise ConfigurationError(
                "Water coverage must lie in [0, 1]",
                config_field="synth.coverage",
                expected="0 <= coverage <= 1",
                provided_value=self.coverage,
            )
        if self.width < 1 or self.height < 1:
            raise ConfigurationError(
                "Scene dimensions must be positive",
                config_field="synth.width/height",
                provided_value=(self.width, self.height),
            )
        if self.water_std <= 0 or self.land_std <= 0:
            raise ConfigurationError(
                "Mode standard deviations must be positive", config_field="synth.*_std"
            )
        if self.smoothness <= 0:
            raise ConfigurationError(
                "Smoothness must be positive",
                config_field="synth.smoothness",
                provided_value=self.smoothness,
            )
        if self.looks < 0 or self.nodata_margin < 0:
            raise ConfigurationError(
                "Looks and nodata margin must be non-negative",
                config_field="synth.looks/nodata_margin",
            )
        if self.clip_min >= self.clip_max:
            raise ConfigurationError(
                "Clip range is empty", config_field="synth.clip_min/clip_max"
            )


@dataclass
class DataConfig:
    """Where tiles come from and how they are split."""

    image_path: Optional[str] = None
    mask_path: Optional[str] = None
    tile_size: int = 256
    fractions: Tuple[float, float, float] = (0.7, 0.1, 0.2)
    split_seed: int = 0
    val_fraction: float = 0.1
    synth: SynthConfig = field(default_factory=SynthConfig)

    def __post_init__(self):
        self.fractions = tuple(float(f) for f in self.fractions)
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ConfigurationError(
                "Split fractions must be three non-negative numbers",
                config_field="data.fractions",
                provided_value=self.fractions,
            )
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigurationError(
                "Split fractions must sum to 1",
                config_field="data.fractions",
                provided_value=self.fractions,
            )
        if self.tile_size < 1:
            raise ConfigurationError(
                "Tile size must be positive",
                config_field="data.tile_size",
                provided_value=self.tile_size,
            )
        if not 0 <= self.val_fraction < 1:
            raise ConfigurationError(
                "Validation fraction must lie in [0, 1)",
                config_field="data.val_fraction",
                provided_value=self.val_fraction,
            )
        if (self.image_path is None) != (self.mask_path is None):
            raise ConfigurationError(
                "Image and mask paths must be given together",
                config_field="data.image_path/mask_path",
            )


@dataclass
class GridConfig:
    """Hyperparameter grid searched exhaustively."""

    optimizers: Tuple[str, ...] = ("adam", "sgd")
    learning_rates: Tuple[float, ...] = (1e-4, 1e-3, 1e-2)
    dropout_rates: Tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.5)
    losses: Tuple[str, ...] = ("dice", "focal", "combined")

    def __post_init__(self):
        self.optimizers = tuple(self.optimizers)
        self.learning_rates = tuple(float(v) for v in self.learning_rates)
        self.dropout_rates = tuple(float(v) for v in self.dropout_rates)
        self.losses = tuple(self.losses)
        for name in ("optimizers", "learning_rates", "dropout_rates", "losses"):
            if not getattr(self, name):
                raise ConfigurationError(
                    "Grid axes must be non-empty", config_field=f"grid.{name}"
                )
        bad = [o for o in self.optimizers if o not in OPTIMIZER_KINDS]
        bad += [loss for loss in self.losses if loss not in LOSS_KINDS]
        if bad:
            raise ConfigurationError(
                f"Unknown grid values: {bad}", config_field="grid", provided_value=bad
            )

    @property
    def size(self) -> int:
        return (
            len(self.optimizers)
            * len(self.learning_rates)
            * len(self.dropout_rates)
            * len(self.losses)
        )


@dataclass
class ExperimentConfig:
    """Main configuration class aggregating every experiment setting."""

    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    data: DataConfig = field(default_factory=DataConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    run_root: str = "runs"
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigurationError(
                "Worker count must be at least 1", config_field="workers", provided_value=self.workers
            )
        self.model.check_tile_size(self.data.tile_size)

    @classmethod
    def from_env(cls) -> "ExperimentConfig":
        """Create configuration from environment variables."""
        seed = int(os.getenv("MODESEG_SEED", "0"))
        data = DataConfig(
            tile_size=int(os.getenv("MODESEG_TILE_SIZE", "256")),
            split_seed=seed,
            synth=SynthConfig(seed=seed),
        )
        return cls(
            train=TrainConfig(seed=seed),
            data=data,
            run_root=os.getenv("MODESEG_RUN_ROOT", "runs"),
            workers=int(os.getenv("MODESEG_WORKERS", "1")),
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Build a configuration from a (possibly partial) nested mapping; unknown keys are rejected."""
        return _from_mapping(cls, data, "")

    def to_dict(self) -> Dict[str, Any]:
        """Fully resolved configuration document."""
        return _to_plain(dataclasses.asdict(self))


def _from_mapping(cls, data: Dict[str, Any], path: str):
    if not isinstance(data, dict):
        raise ConfigurationError(
            f"Expected a mapping at '{path or '<root>'}'",
            config_field=path or "<root>",
            provided_value=type(data).__name__,
        )

    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigurationError(
            f"Unknown configuration keys: {', '.join(path + k for k in unknown)}",
            config_field=path.rstrip(".") or "<root>",
            expected=", ".join(sorted(known)),
            provided_value=unknown,
        )

    kwargs = {}
    for name, value in data.items():
        spec = known[name]
        nested = spec.default_factory() if spec.default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(nested):
            kwargs[name] = _from_mapping(type(nested), value, f"{path}{name}.")
        else:
            kwargs[name] = value

    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigurationError(
            f"Invalid configuration at '{path or '<root>'}': {e}", original_error=e
        )


def _to_plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    return value


class ConfigBuilder:
    """Fluent API for building configurations."""

    def __init__(self, base: Optional[ExperimentConfig] = None):
        self._values = base.to_dict() if base is not None else ExperimentConfig().to_dict()

    def with_arch(self, arch: str) -> "ConfigBuilder":
        """Select 'unet' or 'segnet'."""
        self._values["model"]["arch"] = arch
        return self

    def with_norm(self, kind: str, modes: Optional[int] = None) -> "ConfigBuilder":
        """Select the normalization layer: none, batch or mode."""
        self._values["model"]["norm"]["kind"] = kind
        if modes is not None:
            self._values["model"]["norm"]["modes"] = modes
        return self

    def with_modes(self, modes: int) -> "ConfigBuilder":
        self._values["model"]["norm"]["modes"] = modes
        return self

    def with_model_size(self, depth: int, base_channels: int) -> "ConfigBuilder":
        self._values["model"]["depth"] = depth
        self._values["model"]["base_channels"] = base_channels
        return self

    def with_optimizer(self, kind: str, learning_rate: float) -> "ConfigBuilder":
        """Set the optimizer and learning rate."""
        self._values["optimizer"]["kind"] = kind
        self._values["optimizer"]["learning_rate"] = learning_rate
        return self

    def with_loss(self, kind: str) -> "ConfigBuilder":
        self._values["loss"]["kind"] = kind
        return self

    def with_dropout(self, rate: float) -> "ConfigBuilder":
        self._values["model"]["dropout_rate"] = rate
        return self

    def with_tile_size(self, tile_size: int) -> "ConfigBuilder":
        self._values["data"]["tile_size"] = tile_size
        return self

    def with_batch_size(self, batch_size: int) -> "ConfigBuilder":
        self._values["train"]["batch_size"] = batch_size
        return self

    def with_epochs(self, max_epochs: int) -> "ConfigBuilder":
        self._values["train"]["max_epochs"] = max_epochs
        return self

    def with_patience(self, patience: int) -> "ConfigBuilder":
        self._values["train"]["patience"] = patience
        return self

    def with_seed(self, seed: int) -> "ConfigBuilder":
        """Seed model init, shuffling, splitting and scene synthesis at once."""
        self._values["train"]["seed"] = seed
        self._values["data"]["split_seed"] = seed
        self._values["data"]["synth"]["seed"] = seed
        return self

    def with_data(self, image_path: str, mask_path: str) -> "ConfigBuilder":
        """Train on a raster/mask pair instead of a synthetic scene."""
        self._values["data"]["image_path"] = image_path
        self._values["data"]["mask_path"] = mask_path
        return self

    def with_synthetic_scene(
        self, width: int, height: int, coverage: Optional[float] = None
    ) -> "ConfigBuilder":
        synth = self._values["data"]["synth"]
        synth["width"] = width
        synth["height"] = height
        if coverage is not None:
            synth["coverage"] = coverage
        return self

    def with_workers(self, workers: int) -> "ConfigBuilder":
        self._values["workers"] = workers
        return self

    def with_run_root(self, run_root: str) -> "ConfigBuilder":
        self._values["run_root"] = run_root
        return self

    def desk_scale(self) -> "ConfigBuilder":
        """CPU-friendly sizes: depth 3, 16 base channels, 64-pixel tiles, batch 32."""
        self.with_model_size(3, 16).with_tile_size(64).with_batch_size(32)
        return self.with_synthetic_scene(1024, 832)

    def full_scale(self) -> "ConfigBuilder":
        """Full sizes: 256-pixel tiles, batch 32, up to 60 epochs."""
        depth = 4 if self._values["model"]["arch"] == "unet" else 5
        self.with_model_size(depth, 64).with_tile_size(256).with_batch_size(32)
        return self.with_epochs(60).with_patience(5)

    def build(self) -> ExperimentConfig:
        """Build the configuration."""
        return ExperimentConfig.from_dict(self._values)


# Default global configuration instance
_default_config = None


def get_default_config() -> ExperimentConfig:
    """Get the default configuration instance."""
    global _default_config
    if _default_config is None:
        _default_config = ExperimentConfig.from_env()
    return _default_config


def set_default_config(config: ExperimentConfig):
    """Set the default configuration instance."""
    global _default_config
    _default_config = config
