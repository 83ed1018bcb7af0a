"""
Experiment drivers: hyperparameter grid search, zone cross-validation and the
batch- versus mode-normalization convergence comparison.
"""

import dataclasses
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from ..config.settings import GridConfig, LossConfig, ModelSpec, OptimizerConfig, TrainConfig
from .datapipe import SplitDatasets, split_datasets
from .exceptions import ModeSegError
from .models import (
    ComparisonResult,
    ConfusionMatrix,
    CrossValidationResult,
    GridEntry,
    GridResult,
    RunFailure,
    RunRecord,
    SpeedupRow,
)
from .objectives import metrics
from .segnets import build_model
from .splits import zone_folds
from .tiling import TileDataset
from .trainer import evaluate_loss, train

logger = logging.getLogger(__name__)

T = TypeVar("T")


def _run_parallel(jobs: Sequence[Callable[[], T]], workers: int) -> List[T]:
    """Run independent jobs, keeping submission order in the result list."""
    if workers <= 1:
        return [job() for job in jobs]
    results: List[Optional[T]] = [None] * len(jobs)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_index = {executor.submit(job): i for i, job in enumerate(jobs)}
        for future in as_completed(future_to_index):
            results[future_to_index[future]] = future.result()
    return results


def _train_and_test(
    spec: ModelSpec,
    splits: SplitDatasets,
    train_cfg: TrainConfig,
    opt_cfg: OptimizerConfig,
    loss_cfg: LossConfig,
    label: Optional[str] = None,
) -> Tuple[RunRecord, ConfusionMatrix]:
    model = build_model(spec, seed=train_cfg.seed)
    record = train(model, splits.train, splits.val, train_cfg, opt_cfg, loss_cfg, label=label)
    _, counts = evaluate_loss(model, splits.test, None, train_cfg.batch_size)
    record.test_metrics = metrics(counts)
    return record, counts


# Grid search


def enumerate_grid(grid: GridConfig) -> List[GridEntry]:
    """Every optimizer x learning rate x dropout x loss combination, in that nesting order."""
    combos = itertools.product(grid.optimizers, grid.learning_rates, grid.dropout_rates, grid.losses)
    return [
        GridEntry(optimizer=opt, learning_rate=lr, dropout=rate, loss=loss, order=i)
        for i, (opt, lr, rate, loss) in enumerate(combos)
    ]


def select_best(entries: Sequence[GridEntry]) -> Optional[GridEntry]:
    """Highest validation Dsc; ties go to the lower learning rate, then the smallest (optimizer, dropout, loss)."""
    candidates = [e for e in entries if e.succeeded]
    if not candidates:
        return None
    return min(candidates, key=lambda e: (-e.val_dsc, e.learning_rate, e.optimizer, e.dropout, e.loss))


def run_grid_entry(
    entry: GridEntry,
    spec: ModelSpec,
    splits: SplitDatasets,
    train_cfg: TrainConfig,
    base_opt: OptimizerConfig,
    base_loss: LossConfig,
) -> GridEntry:
    """Train one grid point; library failures are recorded on the entry instead of raised."""
    run_spec = dataclasses.replace(spec, dropout_rate=entry.dropout)
    opt_cfg = dataclasses.replace(base_opt, kind=entry.optimizer, learning_rate=entry.learning_rate)
    loss_cfg = dataclasses.replace(base_loss, kind=entry.loss)
    try:
        record, _ = _train_and_test(run_spec, splits, train_cfg, opt_cfg, loss_cfg, label=spec.label)
    except ModeSegError as e:
        logger.warning(f"Grid point {entry.label} failed: {e.message}")
        return entry.model_copy(update={"failure": RunFailure.from_exception(e), "record": getattr(e, "record", None)})
    return entry.model_copy(update={"record": record, "val_dsc": record.best_val_dsc})


def grid_search(
    spec: ModelSpec,
    splits: SplitDatasets,
    grid: Optional[GridConfig] = None,
    train_cfg: Optional[TrainConfig] = None,
    base_opt: Optional[OptimizerConfig] = None,
    base_loss: Optional[LossConfig] = None,
    workers: int = 1,
) -> GridResult:
    """
    Train one model per grid point with identical data and seed, then pick the
    configuration with the best validation Dsc at its best epoch.

    Failed points stay in the result with their error; the search itself only fails
    to select when every point failed.
    """
    grid = grid or GridConfig()
    train_cfg = train_cfg or TrainConfig()
    base_opt = base_opt or OptimizerConfig()
    base_loss = base_loss or LossConfig()

    entries = enumerate_grid(grid)
    logger.info(f"Grid search over {len(entries)} configurations for {spec.label} with {workers} worker(s)")
    jobs = [
        (lambda e=e: run_grid_entry(e, spec, splits, train_cfg, base_opt, base_loss)) for e in entries
    ]
    finished = _run_parallel(jobs, workers)

    selected = select_best(finished)
    result = GridResult(entries=finished, selected=selected)
    if selected is not None:
        result.test_metrics = selected.record.test_metrics
        logger.info(f"Selected {selected.label} with validation Dsc {selected.val_dsc:.4f}")
    else:
        logger.error("Every grid configuration failed")
    return result


# Zone cross-validation


def cross_validate(
    spec: ModelSpec,
    dataset: TileDataset,
    train_cfg: Optional[TrainConfig] = None,
    opt_cfg: Optional[OptimizerConfig] = None,
    loss_cfg: Optional[LossConfig] = None,
    val_fraction: float = 0.1,
    seed: int = 0,
    workers: int = 1,
) -> CrossValidationResult:
    """
    Four-fold spatial cross-validation: fold z trains on the other three zones and
    tests on zone z. Every fold is standardized with its own training statistics.
    """
    train_cfg = train_cfg or TrainConfig()
    opt_cfg = opt_cfg or OptimizerConfig()
    loss_cfg = loss_cfg or LossConfig()
    plans = zone_folds(dataset, val_fraction, seed)

    def run_fold(plan) -> Tuple[int, Optional[SplitDatasets], Optional[RunRecord], Optional[ModeSegError]]:
        splits = None
        try:
            splits = split_datasets(dataset, plan)
            record, _ = _train_and_test(spec, splits, train_cfg, opt_cfg, loss_cfg)
            return plan.test_zone, splits, record, None
        except ModeSegError as e:
            logger.warning(f"{spec.label} fold for zone {plan.test_zone} failed: {e.message}")
            return plan.test_zone, splits, getattr(e, "record", None), e

    result = CrossValidationResult(label=spec.label)
    for zone, splits, record, error in _run_parallel([lambda p=p: run_fold(p) for p in plans], workers):
        if splits is not None:
            result.stats_fingerprints[zone] = splits.stats.fingerprint
        if record is not None:
            result.records[zone] = record
        if error is not None:
            result.failures[zone] = RunFailure.from_exception(error)
        else:
            result.zone_reports[zone] = record.test_metrics
    return result


# Convergence comparison


def _speedup_rows(
    baseline: Tuple[str, float, float], normalized: Tuple[str, float, float]
) -> List[SpeedupRow]:
    (b_label, b_epochs, b_seconds), (m_label, m_epochs, m_seconds) = baseline, normalized
    if m_seconds > 0:
        factor = b_seconds / m_seconds
    else:
        factor = 1.0 if b_seconds == 0 else float("inf")
    return [
        SpeedupRow(model=b_label, training_epochs=b_epochs, training_seconds=b_seconds, speedup=1.0),
        SpeedupRow(model=m_label, training_epochs=m_epochs, training_seconds=m_seconds, speedup=factor),
    ]


def speedup_report(baseline: RunRecord, normalized: RunRecord) -> List[SpeedupRow]:
    """Epochs to early stop, training time and the time ratio baseline / normalized."""
    return _speedup_rows(
        (baseline.label, float(baseline.stopped_epoch), baseline.total_seconds),
        (normalized.label, float(normalized.stopped_epoch), normalized.total_seconds),
    )


def compare_normalizations(
    spec: ModelSpec,
    splits: SplitDatasets,
    seeds: Sequence[int] = (0,),
    train_cfg: Optional[TrainConfig] = None,
    opt_cfg: Optional[OptimizerConfig] = None,
    loss_cfg: Optional[LossConfig] = None,
    modes: Optional[int] = None,
) -> ComparisonResult:
    """
    Train ``spec`` with batch normalization and with mode normalization for every
    seed, then report median epochs, median time and the speed-up of the latter.

    Runs execute sequentially so process-time measurements are not shared.
    """
    train_cfg = train_cfg or TrainConfig()
    opt_cfg = opt_cfg or OptimizerConfig()
    loss_cfg = loss_cfg or LossConfig()
    modes = modes or (spec.norm.modes if spec.norm.kind == "mode" else 2)
    variants = [
        dataclasses.replace(spec, norm=dataclasses.replace(spec.norm, kind="batch", modes=1)),
        dataclasses.replace(spec, norm=dataclasses.replace(spec.norm, kind="mode", modes=modes)),
    ]

    result = ComparisonResult(
        baseline_label=variants[0].label, mode_label=variants[1].label, seeds=list(seeds)
    )
    summaries = []
    for variant in variants:
        label = variant.label
        records: List[RunRecord] = []
        failures: List[RunFailure] = []
        counts = ConfusionMatrix()
        for seed in seeds:
            seeded = dataclasses.replace(train_cfg, seed=seed)
            try:
                record, seed_counts = _train_and_test(variant, splits, seeded, opt_cfg, loss_cfg)
            except ModeSegError as e:
                logger.warning(f"{label} run with seed {seed} failed: {e.message}")
                failures.append(RunFailure.from_exception(e))
                continue
            records.append(record)
            counts = counts + seed_counts

        result.records[label] = records
        result.failures[label] = failures
        if records:
            result.test_metrics[label] = metrics(counts)
            summaries.append(
                (
                    label,
                    float(np.median([r.stopped_epoch for r in records])),
                    float(np.median([r.total_seconds for r in records])),
                )
            )

    if len(summaries) == 2:
        result.speedup = _speedup_rows(*summaries)
        logger.info(
            f"{result.mode_label} vs {result.baseline_label}: "
            f"{summaries[1][1]:g} vs {summaries[0][1]:g} epochs, speed-up {result.speedup_factor:.2f}"
        )
    return result