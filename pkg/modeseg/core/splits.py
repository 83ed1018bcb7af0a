"""Dataset splits: water-fraction stratified 70/10/20 and quadrant-zone folds."""

import logging
from typing import List, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConfigurationError, DataError
from .models import SplitPlan
from .tiling import Tile, TileDataset

logger = logging.getLogger(__name__)

STRATUM_EDGES = (0.01, 0.1, 0.3, 0.6)
STRATUM_LABELS = ("0-1%", "1-10%", "10-30%", "30-60%", "60-100%")
MIN_STRATUM = 3
MIN_TILES = 10

Tiles = Union[TileDataset, Sequence[Tile]]


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def _strata(water_fractions: np.ndarray) -> List[Tuple[str, List[int]]]:
    """Non-empty strata in bin order, small ones merged into a neighbour."""
    bins = np.digitize(water_fractions, STRATUM_EDGES)
    groups = [
        (STRATUM_LABELS[b], [int(i) for i in np.nonzero(bins == b)[0]])
        for b in range(len(STRATUM_LABELS))
        if np.any(bins == b)
    ]
    while len(groups) > 1:
        small = next((i for i, (_, idx) in enumerate(groups) if len(idx) < MIN_STRATUM), None)
        if small is None:
            break
        target = small - 1 if small > 0 else small + 1
        lo, hi = sorted((small, target))
        merged = (f"{groups[lo][0]}+{groups[hi][0]}", sorted(groups[lo][1] + groups[hi][1]))
        groups[lo:hi + 1] = [merged]
    return groups


def stratified_split(
    tiles: Tiles, fractions: Tuple[float, float, float] = (0.7, 0.1, 0.2), seed: int = 0
) -> SplitPlan:
    """
    Train/validation/test split that keeps the water-fraction mix in every part.

    Tiles are bucketed by water fraction (bins 0, 1%, 10%, 30%, 60%, 100%); every
    stratum is shuffled with ``seed`` and cut by ``fractions``.
    """
    fractions_arr = np.asarray(tiles.water_fractions if isinstance(tiles, TileDataset) else [t.water_fraction for t in tiles])
    n = len(fractions_arr)
    if n < MIN_TILES:
        raise DataError(f"Stratified splitting needs at least {MIN_TILES} tiles, got {n}")

    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    strata = {}
    for label, indices in _strata(fractions_arr):
        order = rng.permutation(np.array(indices))
        size = len(order)
        n_train = min(size, _round_half_up(fractions[0] * size))
        n_val = min(size - n_train, _round_half_up(fractions[1] * size))
        train.extend(int(i) for i in order[:n_train])
        val.extend(int(i) for i in order[n_train : n_train + n_val])
        test.extend(int(i) for i in order[n_train + n_val :])
        strata[label] = indices

    plan = SplitPlan(
        kind="stratified",
        train=sorted(train),
        val=sorted(val),
        test=sorted(test),
        seed=seed,
        strata=strata,
    )
    logger.info(f"Stratified split over {len(strata)} strata: {len(plan.train)}/{len(plan.val)}/{len(plan.test)}")
    return plan


def zone_folds(tiles: Tiles, val_fraction: float = 0.1, seed: int = 0) -> List[SplitPlan]:
    """
    Four folds; fold z tests on zone z and trains on the other three.

    A seeded ``val_fraction`` of the training zones is held out for early stopping.
    """
    zones = tiles.zones if isinstance(tiles, TileDataset) else np.array([t.zone for t in tiles])
    counts = {z: int(np.sum(zones == z)) for z in range(1, 5)}
    empty = [z for z, c in counts.items() if c == 0]
    if empty:
        raise ConfigurationError(
            f"Zone cross-validation needs tiles in every zone; empty: {empty}",
            config_field="data",
            expected="tiles in all four quadrants",
            provided_value=counts,
        )

    plans = []
    for zone in range(1, 5):
        rng = np.random.default_rng([seed, zone])
        test = [int(i) for i in np.nonzero(zones == zone)[0]]
        rest = rng.permutation(np.nonzero(zones != zone)[0])
        n_val = _round_half_up(val_fraction * len(rest))
        if val_fraction > 0 and len(rest) > 1:
            n_val = max(1, n_val)
        plans.append(
            SplitPlan(
                kind="zone",
                train=sorted(int(i) for i in rest[n_val:]),
                val=sorted(int(i) for i in rest[:n_val]),
                test=test,
                seed=seed,
                test_zone=zone,
            )
        )
    logger.info(f"Zone folds with test sizes {[len(p.test) for p in plans]}")
    return plans
