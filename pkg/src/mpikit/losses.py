"""Foreground BCE, partial background cross-entropy and their sum.

Both losses take logits and return ``(LossValue, grad)`` where ``grad`` is
the gradient of the loss value with respect to the logits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax

from .masks import as_mask
from .tensor import ShapeError


@dataclass(frozen=True)
class LossValue:
    value: float
    pixel_count: int
    empty: bool = False

    def __float__(self):
        return float(self.value)


def _float_dtype(x):
    return x.dtype if x.dtype in (np.float32, np.float64) else np.float32


def _channel_axis(logits):
    if logits.ndim == 3:
        return 0
    if logits.ndim == 4:
        return 1
    raise ShapeError(f"logits must be (C, H, W) or (N, C, H, W), got {logits.shape}")


def bce_foreground(fg_logits, gt_fg):
    """Mean binary cross-entropy of foreground logits over all pixels.

    ``gt_fg`` is a foreground mask (0 = foreground), so the target is
    ``1 - gt_fg``. Evaluated as softplus(z) - t*z for stability.
    """
    z = np.asarray(fg_logits)
    ax = _channel_axis(z)
    if z.shape[ax] != 1:
        raise ShapeError(f"foreground logits must have 1 channel, got {z.shape[ax]}")
    z2 = np.squeeze(z, axis=ax)
    m = as_mask(gt_fg)
    if m.shape != z2.shape:
        raise ShapeError(f"mask {m.shape} does not match logits {z.shape}")
    t = 1.0 - m.astype(np.float64)
    zd = z2.astype(np.float64)
    per_pixel = np.maximum(zd, 0.0) - zd * t + np.log1p(np.exp(-np.abs(zd)))
    n = per_pixel.size
    value = float(per_pixel.sum() / n)
    grad = ((expit(zd) - t) / n).reshape(z.shape).astype(_float_dtype(z))
    return LossValue(value, n), grad


def partial_ce_background(bg_logits, gt_labels, real_fg):
    """Mean multi-class cross-entropy over the real background pixels only.

    Pixels marked foreground in ``real_fg`` contribute nothing and receive
    zero gradient, whatever their label. If no pixel is background the loss
    is 0 with ``empty=True``.
    """
    z = np.asarray(bg_logits)
    ax = _channel_axis(z)
    n_cls = z.shape[ax]
    labels = np.asarray(gt_labels)
    m = as_mask(real_fg)
    spatial = z.shape[:ax] + z.shape[ax + 1:]
    if labels.shape != spatial or m.shape != spatial:
        raise ShapeError(f"labels {labels.shape} / mask {m.shape} do not match logits {z.shape}")
    area = m == 1
    count = int(area.sum())
    grad = np.zeros(z.shape, dtype=_float_dtype(z))
    if count == 0:
        return LossValue(0.0, 0, empty=True), grad
    if labels[area].max() >= n_cls or labels[area].min() < 0:
        raise ValueError(f"ground-truth label out of range for {n_cls} classes")
    zc = np.moveaxis(z.astype(np.float64), ax, -1)[area]  # (|A|, C)
    y = labels[area].astype(np.int64)
    logp = log_softmax(zc, axis=-1)
    value = float(-logp[np.arange(count), y].sum() / count)
    g = np.exp(logp)
    g[np.arange(count), y] -= 1.0
    g /= count
    gmove = np.moveaxis(grad, ax, -1)
    gmove[area] = g
    return LossValue(value, count), grad


def total_loss(lf: LossValue, lb: LossValue) -> LossValue:
    """Unweighted sum of the two losses."""
    return LossValue(lf.value + lb.value, lf.pixel_count + lb.pixel_count,
                     empty=lf.empty and lb.empty)
