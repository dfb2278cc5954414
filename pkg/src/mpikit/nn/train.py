"""Training loop: fake-mask injection, both losses, Adam with step decay."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..losses import bce_foreground, partial_ce_background
from ..masks import RectMaskConfig, gen_fake_masks
from ..metrics import IouMeter, is_undefined
from .autodiff import backward, zero_grad
from .model import Model, forward
from .optim import Adam, OptimizerConfig

FINAL_WINDOW = 5


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, 3, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N, H, W) uint8 complete background classes
    masks: np.ndarray   # (N, H, W) uint8, 0 = foreground

    def __post_init__(self):
        n = len(self.images)
        if n == 0:
            raise ValueError("dataset is empty")
        if len(self.labels) != n or len(self.masks) != n:
            raise ValueError("images, labels and masks must have the same length")

    def __len__(self):
        return len(self.images)

    def subset(self, idx):
        return Dataset(self.images[idx], self.labels[idx], self.masks[idx])

    @classmethod
    def from_triplets(cls, triplets):
        images, labels, masks = zip(*triplets)
        return cls(np.stack(images).astype(np.float32), np.stack(labels).astype(np.uint8),
                   np.stack(masks).astype(np.uint8))


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss_f: float
    loss_b: float
    iou_all: float = float("nan")
    iou_fg: float = float("nan")

    @property
    def loss(self):
        return self.loss_f + self.loss_b

    def to_line(self) -> str:
        return (f"epoch={self.epoch} lr={self.lr!r} loss={self.loss!r} loss_f={self.loss_f!r} "
                f"loss_b={self.loss_b!r} iou_all={_fmt(self.iou_all)} iou_fg={_fmt(self.iou_fg)}")


def _fmt(x):
    return "undefined" if is_undefined(x) else repr(float(x))


@dataclass
class TrainingLog:
    records: List[EpochRecord] = field(default_factory=list)

    def final_iou(self, window: int = FINAL_WINDOW):
        """Validation IoUs averaged over the last ``window`` epochs."""
        tail = [r for r in self.records if not is_undefined(r.iou_all)][-window:]
        if not tail:
            return float("nan"), float("nan")
        fg = [r.iou_fg for r in tail if not is_undefined(r.iou_fg)]
        return (float(np.mean([r.iou_all for r in tail])),
                float(np.mean(fg)) if fg else float("nan"))

    def to_text(self) -> str:
        return "".join(r.to_line() + "\n" for r in self.records)


def evaluate(model: Model, data: Dataset, batch_size: int = 16):
    """Dataset-level (all-regions, foreground-region) mean IoU."""
    meter = IouMeter(model.cfg.n_classes)
    for i in range(0, len(data), batch_size):
        sl = slice(i, i + batch_size)
        res = forward(model, data.images[sl], data.masks[sl])
        pred = np.argmax(res.bg_logits.value, axis=1)
        for p, g, m in zip(pred, data.labels[sl], data.masks[sl]):
            meter.update(p, g, m)
    return meter.result()


def compute_losses(res, labels, masks):
    lf, gf = bce_foreground(res.fg_logits.value, masks)
    lb, gb = partial_ce_background(res.bg_logits.value, labels, masks)
    return lf, lb, gf, gb


def train(model: Model, data: Dataset, opt_cfg: OptimizerConfig, val: Optional[Dataset] = None,
          seed: Optional[int] = None, on_epoch=None) -> TrainingLog:
    """Train in place and return the per-epoch log.

    The data order and the fake masks both come from one PCG64 stream seeded
    with ``seed`` (default: the model seed), so a run is reproducible bit for
    bit.
    """
    cfg = model.cfg
    rng = np.random.Generator(np.random.PCG64(cfg.seed if seed is None else seed))
    rect_cfg = RectMaskConfig(cfg.fake_mask_count, cfg.fake_mask_frac_min, cfg.fake_mask_frac_max)
    inject = cfg.fake_masks and cfg.handles_occlusion
    opt = Adam(model.parameters(), opt_cfg)
    log = TrainingLog()
    n = len(data)
    _, _, h, w = data.images.shape
    for epoch in range(1, opt_cfg.epochs + 1):
        lr = opt_cfg.lr_at(epoch)
        order = rng.permutation(n)
        sum_f = sum_b = 0.0
        steps = 0
        for start in range(0, n, opt_cfg.batch_size):
            idx = np.sort(order[start:start + opt_cfg.batch_size])
            imgs, labels, masks = data.images[idx], data.labels[idx], data.masks[idx]
            fake = None
            if inject:
                fake = np.stack([gen_fake_masks(rect_cfg, h, w, rng=rng) for _ in idx])
            res = forward(model, imgs, masks, fake_masks=fake)
            lf, lb, gf, gb = compute_losses(res, labels, masks)
            if not (math.isfinite(lf.value) and math.isfinite(lb.value)):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}: {lf.value} + {lb.value}")
            zero_grad(model.parameters())
            backward([(res.fg_logits, gf), (res.bg_logits, gb)])
            opt.step(lr)
            sum_f += lf.value
            sum_b += lb.value
            steps += 1
        rec = EpochRecord(epoch, lr, sum_f / steps, sum_b / steps)
        if val is not None:
            rec.iou_all, rec.iou_fg = evaluate(model, val)
        log.records.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    return log
