"""Segmentation losses (Dice, focal, combined) and pixel-count metrics."""

import logging
from typing import Callable, Union

import numpy as np

from ..autodiff import Function, Tensor
from ..config.settings import LossConfig
from .exceptions import ContractError, DimensionError
from .models import ConfusionMatrix, MetricReport

logger = logging.getLogger(__name__)

FOCAL_CLAMP = 1e-7

LossFn = Callable[[Tensor, Union[Tensor, np.ndarray]], Tensor]


def _target_array(pred: Tensor, target: Union[Tensor, np.ndarray], op: str) -> Tensor:
    data = target.data if isinstance(target, Tensor) else np.asarray(target)
    if data.shape != pred.shape:
        raise DimensionError(
            f"{op} needs prediction and target of equal shape",
            op=op,
            shapes={"pred": pred.shape, "target": data.shape},
        )
    if not np.all((data == 0) | (data == 1)):
        raise ContractError(f"{op} needs a binary target", op=op)
    return Tensor(data, dtype=pred.dtype)


class DiceLoss(Function):
    """1 - (2 sum(t p) + eps) / (sum(t) + sum(p) + eps), summed over the whole batch."""

    def forward(self, pred: np.ndarray, target: np.ndarray, eps: float) -> np.ndarray:
        p = pred.astype(np.float64)
        t = target.astype(np.float64)
        self.num = 2.0 * (t * p).sum() + eps
        self.den = t.sum() + p.sum() + eps
        return np.asarray(1.0 - self.num / self.den, dtype=pred.dtype)

    def backward(self, grad):
        _, target = self.tensors
        d = -(2.0 * target.data.astype(np.float64) * self.den - self.num) / self.den**2
        return d * grad, None


class FocalLoss(Function):
    """Mean of -alpha_t (1 - p_t)^gamma log(p_t) with p_t clamped at 1e-7."""

    def forward(self, pred: np.ndarray, target: np.ndarray, alpha: float, focal_gamma: float) -> np.ndarray:
        positive = target == 1
        p_t = np.where(positive, pred, 1.0 - pred).astype(np.float64)
        self.sign = np.where(positive, 1.0, -1.0)
        self.alpha_t = np.where(positive, alpha, 1.0 - alpha)
        self.clamped = p_t < FOCAL_CLAMP
        self.p_t = np.maximum(p_t, FOCAL_CLAMP)
        self.focal_gamma = focal_gamma
        losses = -self.alpha_t * (1.0 - self.p_t) ** focal_gamma * np.log(self.p_t)
        return np.asarray(losses.mean(), dtype=pred.dtype)

    def backward(self, grad):
        p, gamma, a = self.p_t, self.focal_gamma, self.alpha_t
        one_minus = 1.0 - p
        if gamma > 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                focus = np.where(one_minus > 0, gamma * one_minus ** (gamma - 1.0), 0.0)
            first = a * focus * np.log(p)
        else:
            first = 0.0
        d_pt = first - a * one_minus**gamma / p
        d_pred = np.where(self.clamped, 0.0, d_pt * self.sign) / p.size
        return d_pred * grad, None


def dice_loss(pred: Tensor, target: Union[Tensor, np.ndarray], cfg: LossConfig = None) -> Tensor:
    cfg = cfg or LossConfig()
    return DiceLoss.apply(pred, _target_array(pred, target, "dice_loss"), eps=cfg.smooth_eps)


def focal_loss(pred: Tensor, target: Union[Tensor, np.ndarray], cfg: LossConfig = None) -> Tensor:
    cfg = cfg or LossConfig(kind="focal")
    return FocalLoss.apply(
        pred,
        _target_array(pred, target, "focal_loss"),
        alpha=cfg.alpha,
        focal_gamma=cfg.focal_gamma,
    )


def combined_loss(pred: Tensor, target: Union[Tensor, np.ndarray], cfg: LossConfig = None) -> Tensor:
    """Fixed 0.5/0.5 blend of the Dice and focal losses."""
    cfg = cfg or LossConfig(kind="combined")
    w_dice, w_focal = cfg.combine_weights
    return dice_loss(pred, target, cfg) * w_dice + focal_loss(pred, target, cfg) * w_focal


_LOSSES = {"dice": dice_loss, "focal": focal_loss, "combined": combined_loss}


def get_loss(cfg: LossConfig) -> LossFn:
    """Loss callable for ``cfg.kind`` bound to ``cfg``."""
    fn = _LOSSES[cfg.kind]
    return lambda pred, target: fn(pred, target, cfg)


def confusion(
    pred_prob: Union[Tensor, np.ndarray], target: Union[Tensor, np.ndarray], threshold: float = 0.5
) -> ConfusionMatrix:
    """Pixel confusion counts with predictions binarized at ``threshold``."""
    p = pred_prob.data if isinstance(pred_prob, Tensor) else np.asarray(pred_prob)
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if p.shape != t.shape:
        raise DimensionError(
            "confusion needs prediction and target of equal shape",
            op="confusion",
            shapes={"pred": p.shape, "target": t.shape},
        )
    predicted = p >= threshold
    actual = t >= 0.5
    return ConfusionMatrix(
        tp=int(np.count_nonzero(predicted & actual)),
        fp=int(np.count_nonzero(predicted & ~actual)),
        tn=int(np.count_nonzero(~predicted & ~actual)),
        fn=int(np.count_nonzero(~predicted & actual)),
    )


def metrics(cm: ConfusionMatrix) -> MetricReport:
    """Accuracy, precision, recall, F1, IoU and Dsc; zero denominators give 0 and are flagged."""
    if cm.total == 0:
        raise ContractError("Cannot score an empty confusion matrix", op="metrics")

    undefined = []

    def ratio(name: str, num: int, den: int) -> float:
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    overlap = 2 * cm.tp + cm.fp + cm.fn
    return MetricReport(
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision=ratio("precision", cm.tp, cm.tp + cm.fp),
        recall=ratio("recall", cm.tp, cm.tp + cm.fn),
        f1=ratio("f1", 2 * cm.tp, overlap),
        iou=ratio("iou", cm.tp, cm.tp + cm.fp + cm.fn),
        dsc=ratio("dsc", 2 * cm.tp, overlap),
        undefined=undefined,
    )
