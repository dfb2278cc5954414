"""Max-pooling as inpainting (MPI).

Foreground regions of a feature map are filled by repeatedly 3x3
max-pooling the background-only features and harvesting, at every
iteration, the pixels that the pooled mask newly reaches. The forward pass
records where every filled value came from so gradients can be routed back
to the background pixel that produced it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .masks import as_mask, dilate_background, erode_background
from .tensor import NO_ARGMAX, PoolMode, ShapeError, _pool_core, as_tensor, mask_mul

NO_SOURCE = -1


class MpiError(ValueError):
    """Raised when a mask leaves no background to inpaint from."""


@dataclass(frozen=True)
class MpiOptions:
    """Knobs of the MPI module.

    ``boundary`` selects the pre-step applied to the mask before inpainting:
    ``"erode"`` shrinks the background so features on object borders are
    treated as foreground, ``"dilate"`` runs the mask through one more
    max-pooling instead.
    """

    boundary_erosion_radius: int = 1
    pool_mode: PoolMode = PoolMode.ZERO_FILL
    max_iterations: Optional[int] = None
    boundary: str = "erode"

    def __post_init__(self):
        if self.boundary_erosion_radius < 0:
            raise ValueError("boundary_erosion_radius must be >= 0")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.boundary not in ("erode", "dilate"):
            raise ValueError(f"boundary must be 'erode' or 'dilate', got {self.boundary!r}")
        object.__setattr__(self, "pool_mode", PoolMode.parse(self.pool_mode))


@dataclass
class Provenance:
    """Where each output value of :func:`mpi_forward` came from.

    ``source`` has the shape of the feature tensor and holds, per element, a
    flat ``y * W + x`` index into the same channel of the input, or
    ``NO_SOURCE``. Background pixels of ``mask`` point at themselves.
    """

    source: np.ndarray
    mask: np.ndarray
    iterations: int
    shape: tuple = field(default=())

    def _mask_b(self):
        return self.mask[:, None] if self.mask.ndim == 3 else self.mask

    def is_identity(self) -> np.ndarray:
        return np.broadcast_to(self._mask_b() == 1, self.source.shape)

    def has_source(self) -> np.ndarray:
        return (self.source >= 0) & ~self.is_identity()

    def no_source(self) -> np.ndarray:
        return self.source == NO_SOURCE

    def lookup(self, *index):
        """``"identity"``, ``None`` (no source) or the ``(y, x)`` source of one element."""
        w = self.source.shape[-1]
        if self.is_identity()[index]:
            return "identity"
        s = int(self.source[index])
        if s == NO_SOURCE:
            return None
        return divmod(s, w)


def boundary_mask(m, opts: MpiOptions) -> np.ndarray:
    """The mask MPI actually uses, after the boundary pre-step."""
    if opts.boundary == "dilate":
        return dilate_background(m, opts.boundary_erosion_radius)
    return erode_background(m, opts.boundary_erosion_radius)


def _prepare(f_raw, m, opts):
    f = as_tensor(f_raw)
    m = as_mask(m)
    if f.ndim == 3 and m.shape != f.shape[-2:]:
        raise ShapeError(f"mask {m.shape} does not match features {f.shape}")
    if f.ndim == 4 and m.shape != (f.shape[0],) + f.shape[-2:]:
        raise ShapeError(f"mask {m.shape} does not match features {f.shape}")
    mb = boundary_mask(m, opts)
    flat = mb.reshape(-1, mb.shape[-2] * mb.shape[-1])
    if not flat.any(axis=1).all():
        raise MpiError("mask has no background pixel left after the boundary pre-step")
    return f, mb


def _expand(mask, f):
    return mask[:, None] if mask.ndim == 3 else mask


def mpi_forward(f_raw, m, opts: MpiOptions = MpiOptions()):
    """Inpaint the foreground of ``f_raw`` with nearby background features.

    Parameters
    ----------
    f_raw : array (C, H, W) or (N, C, H, W)
    m : array (H, W) or (N, H, W)
        1 = background, 0 = foreground.
    opts : MpiOptions

    Returns
    -------
    out : float32 array shaped like ``f_raw``
    prov : Provenance
    """
    f, mb = _prepare(f_raw, m, opts)
    h, w = f.shape[-2:]
    masked = opts.pool_mode is PoolMode.MASKED_SENTINEL
    m_b = _expand(mb, f)

    f_background = mask_mul(f, mb)
    own = np.broadcast_to(np.arange(h * w, dtype=np.int64).reshape(h, w), f.shape)
    src = np.where(m_b == 1, own, NO_SOURCE)
    out_src = src.copy()
    patch = np.zeros_like(f)
    m_old = mb
    iterations = 0
    while (m_old == 0).any():
        if opts.max_iterations is not None and iterations >= opts.max_iterations:
            break
        valid = _expand(m_old, f) == 1 if masked else None
        f_background, arg, _ = _pool_core(f_background, valid)
        src = np.take_along_axis(src.reshape(f.shape[:-2] + (h * w,)),
                                 np.maximum(arg, 0).reshape(f.shape[:-2] + (h * w,)),
                                 axis=-1).reshape(f.shape)
        src[arg == NO_ARGMAX] = NO_SOURCE
        m_new = dilate_background(m_old, 1)
        newly = np.broadcast_to(_expand(m_new - m_old, f) == 1, f.shape)
        patch = np.where(newly, f_background, patch)
        out_src = np.where(newly, src, out_src)
        m_old = m_new
        iterations += 1

    out = np.where(m_b == 1, f, patch).astype(f.dtype)
    return out, Provenance(source=out_src, mask=mb, iterations=iterations, shape=f.shape)


def mpi_backward(prov: Provenance, grad_out) -> np.ndarray:
    """Route ``grad_out`` back through the selections recorded in ``prov``."""
    g = np.asarray(grad_out)
    if g.shape != prov.source.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match forward output {prov.source.shape}")
    h, w = g.shape[-2:]
    rows = int(np.prod(g.shape[:-2]))
    src = prov.source.reshape(rows, h * w)
    gf = g.reshape(rows, h * w)
    keep = src >= 0
    target = (np.arange(rows, dtype=np.int64)[:, None] * (h * w) + src)[keep]
    grad_in = np.bincount(target, weights=gf[keep].astype(np.float64), minlength=rows * h * w)
    return grad_in.reshape(g.shape).astype(g.dtype if g.dtype.kind == "f" else np.float32)


def chebyshev_distance_to_background(mask) -> np.ndarray:
    """Brute-force Chebyshev distance from every pixel to the nearest background pixel."""
    mask = as_mask(mask)
    ys, xs = np.nonzero(mask)
    h, w = mask.shape
    gy, gx = np.mgrid[0:h, 0:w]
    if len(ys) == 0:
        raise MpiError("mask has no background pixel")
    d = np.maximum(np.abs(gy[..., None] - ys), np.abs(gx[..., None] - xs))
    return d.min(axis=-1)


def _oracle_single(f, mb, opts):
    out = f.copy()
    dist = chebyshev_distance_to_background(mb)
    zero_fill = opts.pool_mode is PoolMode.ZERO_FILL
    h, w = mb.shape
    for y, x in zip(*np.nonzero(mb == 0)):
        k = int(dist[y, x])
        if opts.max_iterations is not None and k > opts.max_iterations:
            out[:, y, x] = 0.0
            continue
        y0, y1 = max(0, y - k), min(h, y + k + 1)
        x0, x1 = max(0, x - k), min(w, x + k + 1)
        bg = mb[y0:y1, x0:x1] == 1
        vals = f[:, y0:y1, x0:x1][:, bg]
        fill = vals.max(axis=1)
        if zero_fill:
            # the pixel itself is foreground, so a stored 0 is always in its window
            fill = np.maximum(fill, f.dtype.type(0))
        out[:, y, x] = fill
    return out


def mpi_oracle(f_raw, m, opts: MpiOptions = MpiOptions()) -> np.ndarray:
    """Closed-form MPI by explicit enumeration, independent of the pooling loop.

    Each foreground pixel p at Chebyshev distance k from the nearest
    post-pre-step background pixel receives, per channel, the maximum
    background value within Chebyshev distance k of p (clamped below at
    zero in ``ZERO_FILL`` mode).
    """
    f, mb = _prepare(f_raw, m, opts)
    if f.ndim == 3:
        return _oracle_single(f, mb, opts)
    return np.stack([_oracle_single(f[i], mb[i], opts) for i in range(f.shape[0])])


def nn_inpaint_labels(labels, m, opts: MpiOptions = MpiOptions(), n_classes=None) -> np.ndarray:
    """Nearest-neighbour label inpainting via MPI on one-hot class planes.

    Pixels that are background in ``m`` keep their label; foreground pixels
    take the class whose plane is largest after MPI, lowest class id on ties.
    """
    labels = np.asarray(labels)
    m = as_mask(m)
    if labels.shape != m.shape or labels.ndim != 2:
        raise ShapeError(f"labels {labels.shape} and mask {m.shape} must be equal 2-D shapes")
    if n_classes is None:
        bg_labels = labels[m == 1]
        n_classes = int(bg_labels.max()) + 1 if bg_labels.size else 1
    onehot = (labels[None] == np.arange(n_classes)[:, None, None]) & (m[None] == 1)
    filled, _ = mpi_forward(onehot.astype(np.float32), m, opts)
    guess = np.argmax(filled, axis=0)
    return np.where(m == 1, labels, guess).astype(labels.dtype)
