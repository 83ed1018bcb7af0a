"""CSV and JSON-lines writers for run records and experiment results."""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

from .models import (
    METRIC_COLUMNS,
    CrossValidationResult,
    GridResult,
    MetricReport,
    RunRecord,
    SpeedupRow,
    SplitPlan,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

GRID_COLUMNS = [
    "order",
    "optimizer",
    "learning_rate",
    "dropout",
    "loss",
    "val_dsc",
    "best_epoch",
    "stopped_epoch",
    "total_seconds",
    "status",
    "error",
    "selected",
]
CV_COLUMNS = ["model", "metric", "zone_1", "zone_2", "zone_3", "zone_4", "mean", "std"]
SPEEDUP_COLUMNS = ["Model", "Training Epochs", "Training Time (s)", "Speed-up"]
LOSS_CURVE_COLUMNS = ["model", "epoch", "train_loss", "val_loss"]


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        count = 0
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
            count += 1
    logger.debug(f"Wrote {count} rows to {path}")
    return path


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_record(path: PathLike, record: RunRecord) -> Path:
    """One JSON object per epoch, in epoch order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = record.epoch_lines()
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def write_summary(path: PathLike, record: RunRecord) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(record.model_dump_json(indent=2, exclude={"epochs"}), encoding="utf-8")
    return path


def write_split(path: PathLike, plan: SplitPlan, extra: Mapping[str, Any] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = plan.model_dump()
    payload.update(extra or {})
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


def write_loss_curves(path: PathLike, records: Iterable[RunRecord]) -> Path:
    """Long format: one row per model and epoch."""
    rows = (
        {"model": r.label, "epoch": e.epoch, "train_loss": e.train_loss, "val_loss": e.val_loss}
        for r in records
        for e in r.epochs
    )
    return write_csv(path, LOSS_CURVE_COLUMNS, rows)


def write_test_metrics(path: PathLike, reports: Mapping[str, MetricReport]) -> Path:
    rows = ({"Model": label, **report.as_row()} for label, report in reports.items())
    return write_csv(path, ["Model"] + METRIC_COLUMNS, rows)


def write_speedup(path: PathLike, rows: Sequence[SpeedupRow]) -> Path:
    table = (
        {
            "Model": r.model,
            "Training Epochs": r.training_epochs,
            "Training Time (s)": r.training_seconds,
            "Speed-up": r.speedup,
        }
        for r in rows
    )
    return write_csv(path, SPEEDUP_COLUMNS, table)


def write_grid_results(path: PathLike, result: GridResult) -> Path:
    selected = result.selected.order if result.selected is not None else None

    def row(entry) -> Dict[str, Any]:
        record = entry.record
        return {
            "order": entry.order,
            "optimizer": entry.optimizer,
            "learning_rate": entry.learning_rate,
            "dropout": entry.dropout,
            "loss": entry.loss,
            "val_dsc": entry.val_dsc,
            "best_epoch": record.best_epoch if record else None,
            "stopped_epoch": record.stopped_epoch if record else None,
            "total_seconds": record.total_seconds if record else None,
            "status": "failed" if entry.failure else "completed",
            "error": entry.failure.error_message if entry.failure else None,
            "selected": int(entry.order == selected),
        }

    return write_csv(path, GRID_COLUMNS, (row(e) for e in result.entries))


def write_cv_results(path: PathLike, results: Iterable[CrossValidationResult]) -> Path:
    rows = (row for result in results for row in result.metric_rows())
    return write_csv(path, CV_COLUMNS, rows)
