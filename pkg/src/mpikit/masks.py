"""Binary foreground masks (1 = background, 0 = foreground) and their morphology.

Masks are ``uint8`` arrays of shape (H, W); most helpers also accept a
leading batch axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .tensor import ShapeError

_SQUARE = np.ones((3, 3), dtype=bool)


def as_mask(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim < 2 or min(m.shape) < 1:
        raise ShapeError(f"mask must be at least 2-D and non-empty, got {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask entries must be 0 or 1")
    return m.astype(np.uint8, copy=False)


def _spatial_structure(ndim):
    # square 3x3 window on the last two axes only
    s = np.zeros((1,) * (ndim - 2) + (3, 3), dtype=bool)
    s[..., :, :] = _SQUARE
    return s


def erode_background(m, radius: int) -> np.ndarray:
    """Shrink the background set by a Chebyshev ball of ``radius``.

    A pixel stays background only if every in-bounds pixel within
    Chebyshev distance ``radius`` is background; the image border does not
    erode anything.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    m = as_mask(m)
    if radius == 0:
        return m.copy()
    out = ndimage.binary_erosion(m.astype(bool), structure=_spatial_structure(m.ndim),
                                 iterations=radius, border_value=1)
    return out.astype(np.uint8)


def dilate_background(m, radius: int) -> np.ndarray:
    """Grow the background set by a Chebyshev ball of ``radius`` (3x3 max-pooling of the mask)."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    m = as_mask(m)
    if radius == 0:
        return m.copy()
    out = ndimage.binary_dilation(m.astype(bool), structure=_spatial_structure(m.ndim),
                                  iterations=radius, border_value=0)
    return out.astype(np.uint8)


def intersect_backgrounds(a, b) -> np.ndarray:
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise ShapeError(f"mask shape mismatch: {a.shape} vs {b.shape}")
    return np.minimum(a, b)


@dataclass(frozen=True)
class RectMaskConfig:
    """Random rectangular "fake foreground" masks.

    Rectangle heights and widths are drawn uniformly between ``frac_min``
    and ``frac_max`` of the image height and width.
    """

    count: int = 3
    frac_min: float = 0.1
    frac_max: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if not 0.0 <= self.frac_min <= self.frac_max <= 1.0:
            raise ValueError("need 0 <= frac_min <= frac_max <= 1")


def _rect_extent(rng, n, lo, hi):
    size = int(np.rint(rng.uniform(lo * n, hi * n)))
    # never larger than frac_max allows, never empty
    return max(1, min(size, int(np.floor(hi * n))))


def gen_fake_masks(cfg: RectMaskConfig, h: int, w: int, rng=None) -> np.ndarray:
    """Draw ``cfg.count`` foreground rectangles fully inside an h x w mask.

    Uses numpy's PCG64 generator seeded with ``cfg.seed`` unless a
    ``numpy.random.Generator`` is passed in, in which case its stream is
    consumed instead. Per rectangle the draws are height, width, top, left.
    """
    if h < 1 or w < 1:
        raise ValueError("mask dimensions must be >= 1")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
    m = np.ones((h, w), dtype=np.uint8)
    for _ in range(cfg.count):
        rh = _rect_extent(rng, h, cfg.frac_min, cfg.frac_max)
        rw = _rect_extent(rng, w, cfg.frac_min, cfg.frac_max)
        y0 = int(rng.integers(0, h - rh + 1))
        x0 = int(rng.integers(0, w - rw + 1))
        m[y0:y0 + rh, x0:x0 + rw] = 0
    return m


def downsample_mask(m, factor: int) -> np.ndarray:
    """Conservative block downsampling: a cell is background only if all its pixels are."""
    m = as_mask(m)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    h, w = m.shape[-2:]
    if h % factor or w % factor:
        raise ShapeError(f"factor {factor} does not divide mask shape {(h, w)}")
    if factor == 1:
        return m.copy()
    blocks = m.reshape(m.shape[:-2] + (h // factor, factor, w // factor, factor))
    return blocks.min(axis=(-3, -1))


def upsample_mask(m, factor: int) -> np.ndarray:
    """Nearest-neighbour replication, the inverse layout of :func:`downsample_mask`."""
    m = as_mask(m)
    return np.repeat(np.repeat(m, factor, axis=-2), factor, axis=-1)


def binarize_foreground_logits(logits, threshold: float = 0.5) -> np.ndarray:
    """Foreground (0) wherever sigmoid(logit) >= threshold."""
    logits = np.asarray(logits)
    if logits.ndim == 3:
        if logits.shape[0] != 1:
            raise ShapeError(f"expected 1 channel, got {logits.shape[0]}")
        logits = logits[0]
    elif logits.ndim == 4:
        if logits.shape[1] != 1:
            raise ShapeError(f"expected 1 channel, got {logits.shape[1]}")
        logits = logits[:, 0]
    else:
        raise ShapeError(f"expected (1, H, W) or (N, 1, H, W) logits, got {logits.shape}")
    prob = expit(logits.astype(np.float64))
    return (prob < threshold).astype(np.uint8)
