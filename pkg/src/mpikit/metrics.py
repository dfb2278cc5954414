"""Confusion matrices and mean IoU over all pixels or over the inpainted region."""
from __future__ import annotations

import math

import numpy as np

from .masks import as_mask
from .tensor import ShapeError

UNDEFINED = float("nan")


def is_undefined(x) -> bool:
    return isinstance(x, float) and math.isnan(x)


class ConfusionMatrix:
    """C x C pixel counts, rows = ground truth, columns = prediction."""

    def __init__(self, n_classes, counts=None):
        self.n_classes = int(n_classes)
        if counts is None:
            counts = np.zeros((self.n_classes, self.n_classes), dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (self.n_classes, self.n_classes) or (counts < 0).any():
            raise ValueError("counts must be a non-negative C x C matrix")
        self.counts = counts

    def __add__(self, other):
        if self.n_classes != other.n_classes:
            raise ValueError("cannot merge matrices with different class counts")
        return ConfusionMatrix(self.n_classes, self.counts + other.counts)

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix) and self.n_classes == other.n_classes
                and np.array_equal(self.counts, other.counts))

    def __repr__(self):
        return f"ConfusionMatrix({self.counts.tolist()})"

    def total(self) -> int:
        return int(self.counts.sum())


def accumulate(cm: ConfusionMatrix, pred, gt, region=None) -> ConfusionMatrix:
    """Return ``cm`` plus the counts of (gt, pred) pairs.

    With ``region`` given, only its foreground pixels (value 0) are counted.
    """
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if region is not None:
        region = as_mask(region)
        if region.shape != gt.shape:
            raise ShapeError(f"region {region.shape} does not match labels {gt.shape}")
        sel = region == 0
        pred, gt = pred[sel], gt[sel]
    pred = pred.astype(np.int64).ravel()
    gt = gt.astype(np.int64).ravel()
    c = cm.n_classes
    if gt.size and (gt.min() < 0 or gt.max() >= c or pred.min() < 0 or pred.max() >= c):
        raise ValueError(f"label out of range for {c} classes inside the counted region")
    counts = np.bincount(gt * c + pred, minlength=c * c).reshape(c, c)
    return ConfusionMatrix(c, cm.counts + counts)


def per_class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """IoU per class; NaN for classes absent from both ground truth and prediction."""
    tp = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=0) + cm.counts.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, tp / np.where(union > 0, union, 1), np.nan)


def mean_iou(cm: ConfusionMatrix) -> float:
    ious = per_class_iou(cm)
    ious = ious[~np.isnan(ious)]
    if ious.size == 0:
        return UNDEFINED
    return float(ious.mean())


def evaluate_pair(pred, gt_bg, real_fg, n_classes=3):
    """(all-regions mean IoU, foreground-region mean IoU) for one image."""
    cm_all = accumulate(ConfusionMatrix(n_classes), pred, gt_bg)
    cm_fg = accumulate(ConfusionMatrix(n_classes), pred, gt_bg, region=real_fg)
    return mean_iou(cm_all), mean_iou(cm_fg)


class IouMeter:
    """Dataset-level accumulator of the two confusion matrices."""

    def __init__(self, n_classes=3):
        self.all = ConfusionMatrix(n_classes)
        self.fg = ConfusionMatrix(n_classes)

    def update(self, pred, gt_bg, real_fg):
        self.all = accumulate(self.all, pred, gt_bg)
        self.fg = accumulate(self.fg, pred, gt_bg, region=real_fg)

    def result(self):
        return mean_iou(self.all), mean_iou(self.fg)
