"""From a data configuration to split, standardized tile datasets."""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..config.settings import DataConfig
from .exceptions import DataError, DimensionError
from .models import SplitPlan, StandardizationStats
from .raster import Raster, load_mask, load_raster
from .splits import stratified_split
from .synthetic import synth_scene
from .tiling import TileDataset, standardize, tile

logger = logging.getLogger(__name__)


@dataclass
class SplitDatasets:
    """Standardized train/validation/test subsets plus the plan and statistics behind them."""

    train: TileDataset
    val: TileDataset
    test: TileDataset
    plan: SplitPlan
    stats: StandardizationStats


def load_scene(cfg: DataConfig) -> Tuple[Raster, np.ndarray]:
    """The configured raster and mask, or a synthetic scene when no image path is set."""
    if cfg.image_path is None:
        return synth_scene(gen=cfg.synth)
    if cfg.mask_path is None:
        raise DataError("A mask path is required alongside the image path", path=cfg.image_path)
    raster = load_raster(cfg.image_path)
    mask = load_mask(cfg.mask_path)
    if mask.shape != raster.shape:
        raise DimensionError(
            "Mask and raster dimensions differ",
            op="load_scene",
            shapes={"raster": raster.shape, "mask": mask.shape},
        )
    return raster, mask


def load_tiles(cfg: DataConfig) -> TileDataset:
    raster, mask = load_scene(cfg)
    tiles = tile(raster, mask, cfg.tile_size)
    if not tiles:
        raise DataError(
            f"No complete nodata-free tiles of size {cfg.tile_size} in a {raster.height}x{raster.width} raster",
            path=cfg.image_path,
        )
    return TileDataset(tiles)


def split_datasets(dataset: TileDataset, plan: SplitPlan) -> SplitDatasets:
    """Standardize with training-tile statistics and cut the three subsets."""
    scaled, stats = standardize(dataset, plan.train)
    return SplitDatasets(
        train=scaled.subset(plan.train),
        val=scaled.subset(plan.val),
        test=scaled.subset(plan.test),
        plan=plan,
        stats=stats,
    )


def prepare_stratified(dataset: TileDataset, cfg: DataConfig) -> SplitDatasets:
    plan = stratified_split(dataset, cfg.fractions, cfg.split_seed)
    return split_datasets(dataset, plan)
