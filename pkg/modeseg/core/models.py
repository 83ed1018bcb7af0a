"""Validated result records shared by the data pipeline, trainer and reports."""

import hashlib
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

METRIC_COLUMNS = ["Accuracy", "Precision", "Recall", "F1-Score", "IoU", "Dsc"]
METRIC_FIELDS = ["accuracy", "precision", "recall", "f1", "iou", "dsc"]


class ConfusionMatrix(BaseModel):
    """Pixel confusion counts; the positive class is water."""

    tp: int = Field(0, ge=0, description="Water predicted as water")
    fp: int = Field(0, ge=0, description="Land predicted as water")
    tn: int = Field(0, ge=0, description="Land predicted as land")
    fn: int = Field(0, ge=0, description="Water predicted as land")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )


class MetricReport(BaseModel):
    """The six segmentation scores computed from one confusion matrix."""

    accuracy: float = Field(..., ge=0.0, le=1.0)
    precision: float = Field(..., ge=0.0, le=1.0)
    recall: float = Field(..., ge=0.0, le=1.0)
    f1: float = Field(..., ge=0.0, le=1.0)
    iou: float = Field(..., ge=0.0, le=1.0)
    dsc: float = Field(..., ge=0.0, le=1.0)
    undefined: List[str] = Field(
        default_factory=list, description="Scores whose denominator was zero and were set to 0"
    )

    def as_row(self) -> Dict[str, float]:
        """Scores keyed by their report column names, in report order."""
        return {col: getattr(self, f) for col, f in zip(METRIC_COLUMNS, METRIC_FIELDS)}


class StandardizationStats(BaseModel):
    """Scalar mean and population standard deviation of the training pixels."""

    mu: float
    sigma: float = Field(..., gt=0.0)
    count: int = Field(..., ge=1, description="Number of training pixels")

    @property
    def fingerprint(self) -> str:
        payload = np.array([self.mu, self.sigma], dtype="<f8").tobytes()
        return hashlib.sha256(payload).hexdigest()[:16]

    def apply(self, values: np.ndarray) -> np.ndarray:
        return ((values - self.mu) / self.sigma).astype(np.float32)


class SplitPlan(BaseModel):
    """Disjoint train/validation/test tile index lists."""

    kind: str = Field("stratified", description="stratified or zone")
    train: List[int] = Field(default_factory=list)
    val: List[int] = Field(default_factory=list)
    test: List[int] = Field(default_factory=list)
    seed: Optional[int] = None
    test_zone: Optional[int] = Field(None, ge=1, le=4)
    strata: Dict[str, List[int]] = Field(
        default_factory=dict, description="Stratum label -> tile indices"
    )

    @field_validator("kind")
    def validate_kind(cls, v):
        if v not in ("stratified", "zone"):
            raise ValueError(f"Unknown split kind: {v}")
        return v

    @model_validator(mode="after")
    def check_disjoint(self):
        train, val, test = set(self.train), set(self.val), set(self.test)
        if len(train) != len(self.train) or len(val) != len(self.val) or len(test) != len(self.test):
            raise ValueError("Split partitions contain duplicate tile indices")
        if train & val or train & test or val & test:
            raise ValueError("Split partitions overlap")
        return self

    @property
    def all_indices(self) -> List[int]:
        return sorted(self.train + self.val + self.test)

    def covers(self, n_tiles: int) -> bool:
        """True when the plan partitions exactly the indices 0..n_tiles-1."""
        return self.all_indices == list(range(n_tiles))


class EpochRecord(BaseModel):
    epoch: int = Field(..., ge=1)
    train_loss: float
    val_loss: float
    val_metrics: Optional[MetricReport] = None
    seconds: float = Field(..., ge=0.0)
    cumulative_seconds: float = Field(..., ge=0.0)


class RunRecord(BaseModel):
    """Per-epoch log of one training run plus its stopping summary."""

    label: str = Field("model", description="Model label, e.g. U-NetMN")
    started_at: str = Field(default_factory=lambda: datetime.now().isoformat())
    max_epochs: int = Field(60, ge=1)
    epochs: List[EpochRecord] = Field(default_factory=list)
    stopped_epoch: int = Field(0, ge=0)
    best_epoch: int = Field(0, ge=0)
    best_val_loss: Optional[float] = None
    total_seconds: float = Field(0.0, ge=0.0)
    status: str = Field("running", description="running, completed or diverged")
    weights_fingerprint: Optional[str] = None
    best_weights_fingerprint: Optional[str] = Field(
        None, description="Fingerprint of the weights saved at the best epoch"
    )
    test_metrics: Optional[MetricReport] = None

    @model_validator(mode="after")
    def check_consistency(self):
        if self.stopped_epoch > self.max_epochs:
            raise ValueError("stopped_epoch exceeds max_epochs")
        cumulative = [e.cumulative_seconds for e in self.epochs]
        if any(b < a for a, b in zip(cumulative, cumulative[1:])):
            raise ValueError("cumulative training time must be non-decreasing")
        return self

    @property
    def train_losses(self) -> List[float]:
        return [e.train_loss for e in self.epochs]

    @property
    def val_losses(self) -> List[float]:
        return [e.val_loss for e in self.epochs]

    @property
    def best_val_dsc(self) -> Optional[float]:
        if not self.best_epoch:
            return None
        metrics = self.epochs[self.best_epoch - 1].val_metrics
        return metrics.dsc if metrics else None

    def epoch_lines(self) -> List[str]:
        """One JSON document per epoch, as written to record.jsonl."""
        return [e.model_dump_json() for e in self.epochs]


class RunFailure(BaseModel):
    """A run that raised instead of finishing."""

    error_type: str
    error_message: str
    timestamp: str = Field(default_factory=lambda: datetime.now().isoformat())

    @classmethod
    def from_exception(cls, exception: Exception) -> "RunFailure":
        return cls(error_type=type(exception).__name__, error_message=str(exception))


class GridEntry(BaseModel):
    """One point of the hyperparameter grid and its outcome."""

    optimizer: str
    learning_rate: float = Field(..., gt=0.0)
    dropout: float = Field(..., ge=0.0, lt=1.0)
    loss: str
    order: int = Field(0, ge=0, description="Position in the enumeration")
    val_dsc: Optional[float] = None
    record: Optional[RunRecord] = None
    failure: Optional[RunFailure] = None

    @property
    def succeeded(self) -> bool:
        return self.failure is None and self.val_dsc is not None

    @property
    def label(self) -> str:
        return f"{self.optimizer}/lr={self.learning_rate:g}/dropout={self.dropout:g}/{self.loss}"


class GridResult(BaseModel):
    entries: List[GridEntry] = Field(default_factory=list)
    selected: Optional[GridEntry] = None
    test_metrics: Optional[MetricReport] = None

    @property
    def failures(self) -> List[GridEntry]:
        return [e for e in self.entries if e.failure is not None]


class CrossValidationResult(BaseModel):
    """Per-zone test scores of one model family over the four zone folds."""

    label: str
    zone_reports: Dict[int, MetricReport] = Field(default_factory=dict)
    records: Dict[int, RunRecord] = Field(default_factory=dict)
    failures: Dict[int, RunFailure] = Field(default_factory=dict)
    stats_fingerprints: Dict[int, str] = Field(default_factory=dict)

    def metric_rows(self) -> List[Dict[str, Any]]:
        """Rows of model x metric with one column per zone plus mean and std."""
        rows = []
        for column, name in zip(METRIC_COLUMNS, METRIC_FIELDS):
            row: Dict[str, Any] = {"model": self.label, "metric": column}
            values = []
            for zone in range(1, 5):
                report = self.zone_reports.get(zone)
                value = getattr(report, name) if report is not None else None
                row[f"zone_{zone}"] = value
                if value is not None:
                    values.append(value)
            row["mean"] = float(np.mean(values)) if values else None
            row["std"] = float(np.std(values)) if values else None
            rows.append(row)
        return rows


class SpeedupRow(BaseModel):
    """Convergence summary of one model family; ``speedup`` is relative to the baseline."""

    model: str
    training_epochs: float = Field(..., ge=0.0)
    training_seconds: float = Field(..., ge=0.0)
    speedup: Optional[float] = None


class ComparisonResult(BaseModel):
    """Batch-normalized baseline against its mode-normalized twin over several seeds."""

    baseline_label: str
    mode_label: str
    seeds: List[int] = Field(default_factory=list)
    records: Dict[str, List[RunRecord]] = Field(default_factory=dict)
    failures: Dict[str, List[RunFailure]] = Field(default_factory=dict)
    test_metrics: Dict[str, MetricReport] = Field(default_factory=dict)
    speedup: List[SpeedupRow] = Field(default_factory=list)

    @property
    def speedup_factor(self) -> Optional[float]:
        return self.speedup[-1].speedup if len(self.speedup) == 2 else None
