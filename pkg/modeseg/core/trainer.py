"""Mini-batch training with early stopping, evaluation and tile prediction."""

import logging
import time
from typing import Callable, Dict, Iterator, Optional, Tuple

import numpy as np

from ..autodiff import Tensor, no_grad
from ..config.settings import LossConfig, OptimizerConfig, TrainConfig
from .checkpoint import state_fingerprint, weights_fingerprint
from .exceptions import DataError, NumericalError, TrainingError
from .models import ConfusionMatrix, EpochRecord, MetricReport, RunRecord
from .objectives import confusion, get_loss, metrics
from .optimizers import make_optimizer
from .segnets import SegModel
from .tiling import TileDataset

logger = logging.getLogger(__name__)

Clock = Callable[[], float]


class EarlyStopping:
    """Tracks the monitored value; a gain smaller than ``min_delta`` does not count."""

    def __init__(self, patience: int, min_delta: float = 1e-6):
        self.patience = patience
        self.min_delta = min_delta
        self.best = float("inf")
        self.best_epoch = 0
        self.wait = 0

    def update(self, value: float, epoch: int) -> bool:
        """Record ``value`` for ``epoch``; True when it is a new best."""
        if value < self.best - self.min_delta:
            self.best = value
            self.best_epoch = epoch
            self.wait = 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.wait >= self.patience


def iterate_batches(n: int, batch_size: int, rng: Optional[np.random.Generator] = None) -> Iterator[np.ndarray]:
    """Index batches over ``range(n)``, shuffled when ``rng`` is given; the last may be short."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def evaluate_loss(
    model: SegModel,
    dataset: TileDataset,
    loss_cfg: Optional[LossConfig] = None,
    batch_size: int = 32,
    threshold: float = 0.5,
) -> Tuple[Optional[float], ConfusionMatrix]:
    """
    Inference-mode pass over ``dataset``.

    Returns the batch-size weighted mean loss (None without ``loss_cfg``) and the
    pixel confusion counts accumulated over all tiles.
    """
    if len(dataset) == 0:
        raise DataError("Cannot evaluate on an empty dataset")
    loss_fn = get_loss(loss_cfg) if loss_cfg is not None else None
    images, masks = dataset.images(), dataset.masks()

    model.eval()
    total_loss = 0.0
    counts = ConfusionMatrix()
    with no_grad():
        for batch in iterate_batches(len(dataset), batch_size):
            pred = model(Tensor(images[batch]))
            if loss_fn is not None:
                total_loss += loss_fn(pred, masks[batch]).item() * len(batch)
            counts = counts + confusion(pred, masks[batch], threshold)
    mean_loss = total_loss / len(dataset) if loss_fn is not None else None
    return mean_loss, counts


def evaluate(model: SegModel, dataset: TileDataset, batch_size: int = 32, threshold: float = 0.5) -> MetricReport:
    """Pixel metrics of ``model`` on ``dataset``, micro-aggregated over all tiles."""
    _, counts = evaluate_loss(model, dataset, None, batch_size, threshold)
    return metrics(counts)


def predict_tiles(model: SegModel, images: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Water probabilities [N, 1, T, T] for standardized tile images."""
    model.eval()
    outputs = []
    with no_grad():
        for batch in iterate_batches(len(images), batch_size):
            outputs.append(model(Tensor(images[batch])).data)
    return np.concatenate(outputs) if outputs else np.empty((0,) + images.shape[1:], dtype=np.float32)


def train(
    model: SegModel,
    train_set: TileDataset,
    val_set: TileDataset,
    train_cfg: Optional[TrainConfig] = None,
    opt_cfg: Optional[OptimizerConfig] = None,
    loss_cfg: Optional[LossConfig] = None,
    label: Optional[str] = None,
    clock: Clock = time.process_time,
) -> RunRecord:
    """
    Fit ``model`` on ``train_set`` and early-stop on validation loss.

    Every epoch shuffles with a generator seeded from ``train_cfg.seed``, takes one
    optimizer step per mini-batch, then scores ``val_set`` in inference mode. Epoch
    time covers the training loop only and is read from ``clock`` (process time).
    With ``restore_best`` the weights of the best epoch are reloaded before returning.

    Raises:
        TrainingError: loss or gradients became non-finite; ``.record`` holds the
            epochs finished so far.
    """
    train_cfg = train_cfg or TrainConfig()
    opt_cfg = opt_cfg or OptimizerConfig()
    loss_cfg = loss_cfg or LossConfig()
    if len(train_set) == 0 or len(val_set) == 0:
        raise DataError(
            "Training needs non-empty training and validation sets",
            context={"train": len(train_set), "val": len(val_set)},
        )
    model.spec.check_tile_size(train_set.tile_size)

    rng = np.random.default_rng(train_cfg.seed)
    model.reseed_dropout(train_cfg.seed)
    optimizer = make_optimizer(model, opt_cfg)
    loss_fn = get_loss(loss_cfg)
    stopper = EarlyStopping(train_cfg.patience, train_cfg.min_delta)
    record = RunRecord(label=label or model.spec.label, max_epochs=train_cfg.max_epochs)
    images, masks = train_set.images(), train_set.masks()

    best_state: Optional[Dict[str, np.ndarray]] = None
    cumulative = 0.0
    epoch = 0
    logger.info(
        f"Training {record.label} on {len(train_set)} tiles "
        f"({opt_cfg.kind}, lr={opt_cfg.learning_rate:g}, loss={loss_cfg.kind}, "
        f"dropout={model.spec.dropout_rate:g})"
    )

    for epoch in range(1, train_cfg.max_epochs + 1):
        started = clock()
        model.train()
        total = 0.0
        try:
            for batch in iterate_batches(len(train_set), train_cfg.batch_size, rng):
                optimizer.zero_grad()
                loss = loss_fn(model(Tensor(images[batch])), masks[batch])
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericalError("Loss is not finite", op=loss_cfg.kind, layer="loss")
                loss.backward()
                optimizer.step()
                total += value * len(batch)
            seconds = clock() - started
            val_loss, val_counts = evaluate_loss(model, val_set, loss_cfg, train_cfg.batch_size)
            if not np.isfinite(val_loss):
                raise NumericalError("Validation loss is not finite", op=loss_cfg.kind, layer="loss")
        except NumericalError as e:
            record.status = "diverged"
            record.stopped_epoch = epoch - 1
            raise TrainingError(
                f"Training diverged in epoch {epoch}: {e.message}",
                epoch=epoch,
                record=record,
                original_error=e,
            )
        cumulative += seconds
        train_loss = total / len(train_set)
        record.epochs.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=val_loss,
                val_metrics=metrics(val_counts),
                seconds=seconds,
                cumulative_seconds=cumulative,
            )
        )
        if stopper.update(val_loss, epoch) and train_cfg.restore_best:
            best_state = {name: value.copy() for name, value in model.state_dict().items()}
        logger.info(
            f"[{record.label}] epoch {epoch}/{train_cfg.max_epochs} "
            f"train_loss={train_loss:.4f} val_loss={val_loss:.4f} "
            f"val_dsc={record.epochs[-1].val_metrics.dsc:.4f} ({seconds:.2f}s)"
        )
        if stopper.should_stop:
            logger.info(f"[{record.label}] early stop after epoch {epoch}; best epoch {stopper.best_epoch}")
            break

    if best_state is not None:
        model.load_state_dict(best_state)
        record.best_weights_fingerprint = state_fingerprint(best_state)

    record.stopped_epoch = epoch
    record.best_epoch = stopper.best_epoch
    record.best_val_loss = stopper.best if stopper.best_epoch else None
    record.total_seconds = cumulative
    record.status = "completed"
    record.weights_fingerprint = weights_fingerprint(model)
    return RunRecord.model_validate(record.model_dump())