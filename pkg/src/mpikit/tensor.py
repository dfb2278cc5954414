"""Dense float32 tensors and the 3x3 same-size max-pooling used by MPI.

Tensors are plain ``numpy.ndarray`` objects of dtype float32, laid out
C x H x W (or N x C x H x W), C-contiguous. float64 arrays are passed
through unchanged so gradient checks can recompute in double precision.
"""
from __future__ import annotations

import enum

import numpy as np

NO_ARGMAX = -1

# row-major neighbourhood order; the first strict maximum wins ties


class PoolMode(enum.Enum):
    """How masked-out positions take part in max-pooling."""

    ZERO_FILL = "zero"
    MASKED_SENTINEL = "masked"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"zero": cls.ZERO_FILL, "zerofill": cls.ZERO_FILL,
                   "masked": cls.MASKED_SENTINEL, "maskedsentinel": cls.MASKED_SENTINEL}
        try:
            return aliases[str(value).lower().replace("_", "")]
        except KeyError:
            raise ValueError(f"unknown pool mode: {value!r}") from None


class ShapeError(ValueError):
    pass


def as_tensor(data, rank=None) -> np.ndarray:
    """Return ``data`` as a contiguous float32 (or float64) array, copying only if needed."""
    keep64 = isinstance(data, np.ndarray) and data.dtype == np.float64
    t = np.ascontiguousarray(data, dtype=np.float64 if keep64 else np.float32)
    if rank is not None and t.ndim != rank:
        raise ShapeError(f"expected rank {rank} tensor, got shape {t.shape}")
    if t.ndim not in (3, 4):
        raise ShapeError(f"tensor must be rank 3 or 4, got shape {t.shape}")
    if min(t.shape) < 1:
        raise ShapeError(f"all extents must be >= 1, got {t.shape}")
    return t


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def _first_max_pass(vals, ok, axis, n):
    """Select the first maximum among the three shifts along ``axis``.

    ``vals``/``ok`` are padded by one on ``axis``; returns the best value,
    the winning shift (0, 1, 2) and whether any entry was admissible.
    """
    def shifted(a, k):
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(k, k + n)
        return a[tuple(sl)]

    best = shifted(vals, 0).copy()
    found = shifted(ok, 0).copy()
    which = np.zeros(best.shape, dtype=np.int8)
    for k in (1, 2):
        cand, adm = shifted(vals, k), shifted(ok, k)
        take = adm & (~found | (cand > best))
        np.copyto(best, cand, where=take)
        which[take] = k
        found |= adm
    return best, which, found


def _pool_core(t, valid):
    """3x3 stride-1 max over the trailing two axes.

    Out-of-bounds positions never participate. ``valid`` (broadcastable to
    ``t``) excludes positions from the max when given. Returns the pooled
    values, the flat argmax index into H*W (``NO_ARGMAX`` when the window
    had no admissible entry) and the validity of each output.

    The window is scanned as a row pass followed by a column pass; taking the
    first maximum in each pass picks the first maximum in row-major order.
    """
    h, w = t.shape[-2:]
    lead = t.shape[:-2]
    pad_v = np.zeros(lead + (h + 2, w + 2), dtype=t.dtype)
    pad_v[..., 1:-1, 1:-1] = t
    ok = np.zeros(lead + (h + 2, w + 2), dtype=bool)
    ok[..., 1:-1, 1:-1] = True if valid is None else np.broadcast_to(valid, t.shape)

    row_best, dx, row_found = _first_max_pass(pad_v, ok, t.ndim - 1, w)
    best, dy, found = _first_max_pass(row_best, row_found, t.ndim - 2, h)
    # column offset of the winner, read from the row the column pass chose
    dx_win = np.take_along_axis(
        np.stack([dx[..., k:k + h, :] for k in range(3)]), dy[None].astype(np.intp), axis=0)[0]
    ys = np.arange(h).reshape(h, 1)
    xs = np.arange(w).reshape(1, w)
    arg = (ys + dy.astype(np.int64) - 1) * w + (xs + dx_win.astype(np.int64) - 1)
    arg = np.where(found, arg, NO_ARGMAX)
    best = np.where(found, best, t.dtype.type(0))
    return best, arg, found


def maxpool_same(t, mask_of_valid=None, mode=PoolMode.ZERO_FILL):
    """3x3, stride 1, size-preserving max-pool with argmax tracking.

    Parameters
    ----------
    t : array, shape (C, H, W) or (N, C, H, W)
    mask_of_valid : array of {0, 1}, shape (H, W) or (N, H, W), optional
        Only consulted in ``MASKED_SENTINEL`` mode, where zero entries are
        excluded from every window. In ``ZERO_FILL`` mode the stored values
        are pooled as they are.
    mode : PoolMode

    Returns
    -------
    out : float32 array like ``t``
    argmax : int64 array like ``t``
        Flat ``y * W + x`` index of the selected input, or ``NO_ARGMAX``
        (only possible in ``MASKED_SENTINEL`` mode, where the output is 0).
    """
    t = as_tensor(t)
    mode = PoolMode.parse(mode)
    valid = None
    if mask_of_valid is not None:
        m = np.asarray(mask_of_valid)
        if m.shape[-2:] != t.shape[-2:] or m.ndim not in (2, t.ndim - 1):
            raise ShapeError(f"mask shape {m.shape} does not match tensor {t.shape}")
        if mode is PoolMode.MASKED_SENTINEL:
            valid = (m != 0)
            if valid.ndim == 3:
                valid = valid[:, None]
    out, arg, _ = _pool_core(t, valid)
    return out, arg


def mask_mul(t, m) -> np.ndarray:
    """Multiply every channel of ``t`` by the (H, W) or (N, H, W) mask ``m``."""
    t = as_tensor(t)
    m = np.asarray(m)
    if m.shape[-2:] != t.shape[-2:] or m.ndim not in (2, t.ndim - 1):
        raise ShapeError(f"mask shape {m.shape} does not match tensor {t.shape}")
    keep = m != 0
    if keep.ndim == 3:
        keep = keep[:, None]
    # where() rather than a product so foreground becomes +0.0, never -0.0
    return np.where(keep, t, t.dtype.type(0))


def add(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b)
    return a + b


def sub(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b)
    return a - b


def mul(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b)
    return a * b
