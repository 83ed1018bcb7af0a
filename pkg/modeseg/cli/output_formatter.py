"""Rich console rendering of configurations, run records and result tables."""

from typing import Iterable, Mapping, Sequence

from rich.console import Console
from rich.table import Table

from ..config import ExperimentConfig
from ..core.models import (
    METRIC_COLUMNS,
    CrossValidationResult,
    GridResult,
    MetricReport,
    RunRecord,
    SpeedupRow,
)
from .constants import DISPLAY_LIMITS


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


class OutputFormatter:
    """Tables for the console; files are written by ``modeseg.core.reporting``."""

    def __init__(self, console: Console):
        self.console = console

    def show_config(self, config: ExperimentConfig) -> None:
        table = Table(title="Resolved Configuration")
        table.add_column("Setting", style="cyan")
        table.add_column("Value", style="white")
        for section, values in config.to_dict().items():
            if isinstance(values, dict):
                for key, value in self._flatten(values):
                    table.add_row(f"{section}.{key}", str(value))
            else:
                table.add_row(section, str(values))
        self.console.print(table)

    def _flatten(self, data: Mapping, prefix: str = "") -> Iterable:
        for key, value in data.items():
            if isinstance(value, dict):
                yield from self._flatten(value, f"{prefix}{key}.")
            else:
                yield f"{prefix}{key}", value

    def show_record(self, record: RunRecord) -> None:
        table = Table(title=f"{record.label}: stopped at epoch {record.stopped_epoch}, best {record.best_epoch}")
        for column in ("Epoch", "Train loss", "Val loss", "Val Dsc", "Seconds"):
            table.add_column(column, justify="right")
        epochs = record.epochs[-DISPLAY_LIMITS["epoch_rows"] :]
        for e in epochs:
            style = "bold green" if e.epoch == record.best_epoch else None
            dsc = e.val_metrics.dsc if e.val_metrics else None
            table.add_row(str(e.epoch), _fmt(e.train_loss), _fmt(e.val_loss), _fmt(dsc), _fmt(e.seconds), style=style)
        self.console.print(table)

    def show_metrics(self, reports: Mapping[str, MetricReport], title: str = "Test Metrics") -> None:
        table = Table(title=title)
        table.add_column("Model", style="cyan")
        for column in METRIC_COLUMNS:
            table.add_column(column, justify="right")
        for label, report in reports.items():
            table.add_row(label, *(_fmt(v) for v in report.as_row().values()))
        self.console.print(table)

    def show_grid(self, result: GridResult) -> None:
        ranked = sorted(
            (e for e in result.entries if e.succeeded), key=lambda e: (-e.val_dsc, e.learning_rate, e.order)
        )
        table = Table(title=f"Grid search: {len(result.entries)} configurations, {len(result.failures)} failed")
        for column in ("#", "Optimizer", "LR", "Dropout", "Loss", "Val Dsc", "Best epoch"):
            table.add_column(column, justify="right")
        for e in ranked[: DISPLAY_LIMITS["grid_rows"]]:
            style = "bold green" if result.selected is not None and e.order == result.selected.order else None
            table.add_row(
                str(e.order), e.optimizer, f"{e.learning_rate:g}", f"{e.dropout:g}", e.loss,
                _fmt(e.val_dsc), str(e.record.best_epoch), style=style,
            )
        self.console.print(table)

    def show_cross_validation(self, results: Sequence[CrossValidationResult]) -> None:
        table = Table(title="Zone cross-validation")
        for column in ("Model", "Metric", "Zone 1", "Zone 2", "Zone 3", "Zone 4", "Mean", "Std"):
            table.add_column(column, justify="right")
        for result in results:
            for row in result.metric_rows():
                table.add_row(
                    row["model"], row["metric"],
                    *(_fmt(row[k]) for k in ("zone_1", "zone_2", "zone_3", "zone_4", "mean", "std")),
                )
        self.console.print(table)

    def show_speedup(self, rows: Sequence[SpeedupRow]) -> None:
        table = Table(title="Convergence")
        for column in ("Model", "Training Epochs", "Training Time (s)", "Speed-up"):
            table.add_column(column, justify="right")
        for r in rows:
            table.add_row(r.model, f"{r.training_epochs:g}", f"{r.training_seconds:.2f}", f"{r.speedup:.2f}")
        self.console.print(table)
