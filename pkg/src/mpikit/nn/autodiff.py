"""A small tape-free reverse-mode autodiff over numpy arrays.

Every op returns a :class:`Var` that remembers its parents and a closure
mapping the output gradient to parent gradients. :func:`backward` walks
the graph in reverse topological order.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..masks import as_mask
from ..mpi import MpiOptions, boundary_mask, mpi_backward, mpi_forward
from ..tensor import mask_mul


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn", "name", "meta")

    def __init__(self, value, parents=(), backward_fn=None, name=None, meta=None):
        self.value = value
        self.meta = meta
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Var{label} shape={self.value.shape} dtype={self.value.dtype}>"


def _topo_order(roots):
    order, seen = [], set()
    stack = [(r, False) for r in roots]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(seeds):
    """Accumulate gradients into every Var reachable from ``seeds``.

    ``seeds`` is a list of ``(var, grad)`` pairs; the graph is the union of
    their ancestors.
    """
    roots = [v for v, _ in seeds]
    for v, g in seeds:
        v.grad = g if v.grad is None else v.grad + g
    for node in reversed(_topo_order(roots)):
        if node.backward_fn is None or node.grad is None:
            continue
        grads = node.backward_fn(node.grad)
        for parent, g in zip(node.parents, grads):
            if g is None:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g


def zero_grad(params):
    for p in params:
        p.grad = None


def conv2d(x: Var, w: Var, b: Var, stride: int = 1) -> Var:
    """3x3 convolution with zero padding 1 on NCHW input."""
    xv, wv = x.value, w.value
    n, c, h, wd = xv.shape
    co = wv.shape[0]
    xp = np.pad(xv, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * 9)
    wmat = wv.reshape(co, c * 9)
    out = (cols @ wmat.T + b.value).reshape(n, ho, wo, co).transpose(0, 3, 1, 2)

    def back(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, co)
        dw = (gm.T @ cols).reshape(wv.shape)
        db = gm.sum(axis=0)
        # col2im in NHWC with the kernel offsets leading, transposed back once
        dcols = np.ascontiguousarray((gm @ wmat).reshape(n, ho, wo, c, 9).transpose(4, 0, 1, 2, 3))
        dxp = np.zeros((n, h + 2, wd + 2, c), dtype=g.dtype)
        for k in range(9):
            kh, kw = divmod(k, 3)
            dxp[:, kh:kh + stride * (ho - 1) + 1:stride, kw:kw + stride * (wo - 1) + 1:stride] += dcols[k]
        return dxp[:, 1:-1, 1:-1].transpose(0, 3, 1, 2), dw, db

    return Var(np.ascontiguousarray(out), (x, w, b), back)


def relu(x: Var) -> Var:
    on = x.value > 0
    return Var(np.where(on, x.value, 0).astype(x.value.dtype), (x,), lambda g: (g * on,))


def _bilinear_matrix(n, dtype):
    # half-pixel centres, edge-clamped (align_corners=False)
    u = np.zeros((2 * n, n), dtype=np.float64)
    for i in range(2 * n):
        s = max((i + 0.5) / 2.0 - 0.5, 0.0)
        i0 = min(int(np.floor(s)), n - 1)
        i1 = min(i0 + 1, n - 1)
        frac = s - i0
        u[i, i0] += 1.0 - frac
        u[i, i1] += frac
    return u.astype(dtype)


def upsample2x(x: Var) -> Var:
    """Bilinear x2 upsampling of the two trailing axes."""
    h, w = x.value.shape[-2:]
    uh = _bilinear_matrix(h, x.value.dtype)
    uw = _bilinear_matrix(w, x.value.dtype)
    out = uh @ x.value @ uw.T
    return Var(out, (x,), lambda g: (uh.T @ g @ uw,))


def add(a: Var, b: Var) -> Var:
    return Var(a.value + b.value, (a, b), lambda g: (g, g))


def blackout(x: Var, mask) -> Var:
    """Zero the foreground (mask == 0) positions; they receive no gradient."""
    out = mask_mul(x.value, mask).astype(x.value.dtype)
    return Var(out, (x,), lambda g: (mask_mul(g, mask).astype(g.dtype),))


def mpi(x: Var, mask, opts: MpiOptions) -> Var:
    """MPI node for a batch; gradients follow the recorded provenance.

    Items whose mask keeps no background after the boundary pre-step have
    nothing to inpaint from and are blacked out entirely.
    """
    mask = as_mask(mask)
    mb = boundary_mask(mask, opts)
    ok = mb.reshape(mb.shape[0], -1).any(axis=1)
    if ok.all():
        out, prov = mpi_forward(x.value, mask, opts)
        return Var(out.astype(x.value.dtype), (x,),
                   lambda g: (mpi_backward(prov, g).astype(g.dtype),), meta=prov)
    if not ok.any():
        return Var(np.zeros_like(x.value), (x,), lambda g: (np.zeros_like(g),))
    out = np.zeros_like(x.value)
    sub, prov = mpi_forward(x.value[ok], mask[ok], opts)
    out[ok] = sub

    def back(g):
        gi = np.zeros_like(g)
        gi[ok] = mpi_backward(prov, g[ok])
        return (gi,)

    return Var(out, (x,), back, meta=prov)
