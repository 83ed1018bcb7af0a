"""Synthetic SAR-like scenes with a bimodal (water / land) backscatter histogram."""

import dataclasses
import logging
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from ..config.settings import SynthConfig
from .raster import Raster

logger = logging.getLogger(__name__)


def _water_field(height: int, width: int, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Contiguous water blobs from thresholded low-frequency noise."""
    field = gaussian_filter(rng.standard_normal((height, width)), sigma=cfg.smoothness, mode="reflect")
    if cfg.coverage <= 0:
        return np.zeros((height, width), dtype=bool)
    if cfg.coverage >= 1:
        return np.ones((height, width), dtype=bool)
    return field < np.quantile(field, cfg.coverage)


def _swath_margins(height: int, width: int, margin: int) -> np.ndarray:
    """Slanted no-data wedges on the left and right edges, like a side-looking swath."""
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    slope = rows / max(height - 1, 1)
    left = cols < np.round(margin * (1.0 - slope))
    right = cols >= width - np.round(margin * slope)
    return left | right


def synth_scene(
    width: Optional[int] = None,
    height: Optional[int] = None,
    gen: Optional[SynthConfig] = None,
    seed: Optional[int] = None,
) -> Tuple[Raster, np.ndarray]:
    """
    Generate a backscatter raster (dB) and its {0,1} water mask.

    Water pixels follow N(water_mean, water_std), land N(land_mean, land_std). With
    ``looks > 0`` gamma speckle is applied in linear power. Values are clipped to the
    configured dB range; ``nodata_margin`` adds sentinel-valued swath edges.
    """
    cfg = gen or SynthConfig()
    width = cfg.width if width is None else width
    height = cfg.height if height is None else height
    seed = cfg.seed if seed is None else seed
    cfg = dataclasses.replace(cfg, width=width, height=height, seed=seed)

    rng = np.random.default_rng(seed)
    water = _water_field(height, width, cfg, rng)
    water_db = rng.normal(cfg.water_mean, cfg.water_std, size=(height, width))
    land_db = rng.normal(cfg.land_mean, cfg.land_std, size=(height, width))
    values = np.where(water, water_db, land_db)

    if cfg.looks > 0:
        power = 10.0 ** (values / 10.0)
        speckle = rng.gamma(shape=cfg.looks, scale=1.0 / cfg.looks, size=(height, width))
        values = 10.0 * np.log10(power * speckle)

    values = np.clip(values, cfg.clip_min, cfg.clip_max).astype(np.float32)
    mask = water.astype(np.uint8)

    nodata = None
    if cfg.nodata_margin > 0:
        margins = _swath_margins(height, width, cfg.nodata_margin)
        values[margins] = np.float32(cfg.nodata_value)
        mask[margins] = 0
        nodata = cfg.nodata_value

    logger.info(
        f"Synthesized {height}x{width} scene, water fraction {mask.mean():.3f}, seed {seed}"
    )
    return Raster(values=values, nodata=nodata), mask
