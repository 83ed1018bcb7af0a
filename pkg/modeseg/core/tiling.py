"""Tiling rasters into training samples, standardization and stitching predictions back."""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ContractError, DataError, DimensionError
from .models import StandardizationStats
from .raster import Raster

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Tile:
    """One T x T crop of a raster and its mask."""

    image: np.ndarray  # [1, T, T]
    mask: np.ndarray  # [1, T, T], values in {0, 1}
    origin: Tuple[int, int]
    zone: int
    water_fraction: float

    @property
    def size(self) -> int:
        return self.image.shape[-1]


def tile_grid(height: int, width: int, tile_size: int) -> Tuple[int, int]:
    """Rows and columns of the non-overlapping grid anchored at (0, 0); remainders are dropped."""
    if tile_size < 1:
        raise ContractError("Tile size must be positive", op="tile")
    return height // tile_size, width // tile_size


def zone_of(row: int, col: int, tile_size: int, height: int, width: int) -> int:
    """Quadrant of the tile centre: 1 top-left, 2 top-right, 3 bottom-left, 4 bottom-right."""
    centre_r = row + tile_size / 2
    centre_c = col + tile_size / 2
    return 1 + (2 if centre_r >= height / 2 else 0) + (1 if centre_c >= width / 2 else 0)


def tile(raster: Raster, mask: Optional[np.ndarray] = None, tile_size: int = 256) -> List[Tile]:
    """
    Cut ``raster`` (and ``mask``) into T x T tiles.

    Tiles touching any nodata pixel are discarded. Tile images are views into the raster.
    Without a mask, tiles get an all-land mask (used for prediction).
    """
    height, width = raster.shape
    if mask is None:
        mask = np.zeros((height, width), dtype=np.float32)
    mask = np.asarray(mask)
    if mask.shape != raster.shape:
        raise DimensionError(
            "Mask and raster dimensions differ",
            op="tile",
            shapes={"raster": raster.shape, "mask": mask.shape},
        )
    mask = mask.astype(np.float32, copy=False)

    rows, cols = tile_grid(height, width, tile_size)
    valid = raster.valid_mask()
    tiles = []
    discarded = 0
    for i in range(rows):
        for j in range(cols):
            r, c = i * tile_size, j * tile_size
            window = (slice(r, r + tile_size), slice(c, c + tile_size))
            if not valid[window].all():
                discarded += 1
                continue
            tile_mask = mask[window][None]
            tiles.append(
                Tile(
                    image=raster.values[window][None],
                    mask=tile_mask,
                    origin=(r, c),
                    zone=zone_of(r, c, tile_size, height, width),
                    water_fraction=float(tile_mask.mean()),
                )
            )

    logger.info(f"Tiled {height}x{width} raster into {len(tiles)} tiles of {tile_size} ({discarded} with nodata dropped)")
    return tiles


class TileDataset:
    """Ordered collection of equally sized tiles."""

    def __init__(self, tiles: Sequence[Tile], stats: Optional[StandardizationStats] = None):
        self.tiles = list(tiles)
        self.stats = stats
        sizes = {t.image.shape for t in self.tiles}
        if len(sizes) > 1:
            raise DimensionError("Tiles in a dataset must share one size", op="TileDataset")

    def __len__(self) -> int:
        return len(self.tiles)

    def __getitem__(self, index: int) -> Tile:
        return self.tiles[index]

    def __iter__(self) -> Iterator[Tile]:
        return iter(self.tiles)

    @property
    def tile_size(self) -> int:
        return self.tiles[0].size if self.tiles else 0

    @property
    def zones(self) -> np.ndarray:
        return np.array([t.zone for t in self.tiles], dtype=int)

    @property
    def water_fractions(self) -> np.ndarray:
        return np.array([t.water_fraction for t in self.tiles], dtype=float)

    def images(self, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """Stacked images [N, 1, T, T] as float32."""
        chosen = self.tiles if indices is None else [self.tiles[i] for i in indices]
        return np.stack([t.image for t in chosen]).astype(np.float32)

    def masks(self, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        chosen = self.tiles if indices is None else [self.tiles[i] for i in indices]
        return np.stack([t.mask for t in chosen]).astype(np.float32)

    def subset(self, indices: Sequence[int]) -> "TileDataset":
        return TileDataset([self.tiles[i] for i in indices], stats=self.stats)


def standardize(
    tiles: Union[TileDataset, Sequence[Tile]], train_indices: Sequence[int]
) -> Tuple[TileDataset, StandardizationStats]:
    """
    Standardize every tile with the mean and population standard deviation of the
    training tiles' pixels only.
    """
    dataset = tiles if isinstance(tiles, TileDataset) else TileDataset(tiles)
    if len(train_indices) == 0:
        raise ContractError("Standardization needs at least one training tile", op="standardize")

    pixels = np.concatenate([dataset[i].image.ravel() for i in train_indices]).astype(np.float64)
    sigma = float(pixels.std())
    if sigma == 0.0:
        raise DataError("Training pixels have zero spread; cannot standardize")
    stats = StandardizationStats(mu=float(pixels.mean()), sigma=sigma, count=pixels.size)

    logger.debug(f"Standardized with mu={stats.mu:.4f} sigma={stats.sigma:.4f} over {stats.count} pixels")
    return apply_standardization(dataset, stats), stats


def apply_standardization(
    tiles: Union[TileDataset, Sequence[Tile]], stats: StandardizationStats
) -> TileDataset:
    """Standardize with previously computed statistics (e.g. those stored with a checkpoint)."""
    scaled = [dataclasses.replace(t, image=stats.apply(t.image)) for t in tiles]
    return TileDataset(scaled, stats=stats)


def stitch(
    predictions: np.ndarray,
    tiles: Sequence[Tile],
    height: int,
    width: int,
    fill: float = -1.0,
) -> np.ndarray:
    """Place tile predictions [N, 1, T, T] at their origins; uncovered pixels get ``fill``."""
    predictions = np.asarray(predictions)
    if len(predictions) != len(tiles):
        raise DimensionError(
            "One prediction per tile is required",
            op="stitch",
            context={"predictions": len(predictions), "tiles": len(tiles)},
        )
    out = np.full((height, width), fill, dtype=np.float32)
    for pred, t in zip(predictions, tiles):
        r, c = t.origin
        size = t.size
        out[r : r + size, c : c + size] = pred.reshape(size, size)
    return out
