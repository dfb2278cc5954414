"""Finite-difference gradient checks for small graph fragments.

A fragment is a function of named float64 arrays returning the scalar
loss, the analytic gradients and a *signature* of its piecewise-linear
region (ReLU on/off pattern, MPI sources). Central differences are taken
in double precision; a coordinate whose +eps / -eps evaluations land in a
different region than the base point sits on a kink or an argmax tie and
is skipped rather than compared.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mpi import MpiOptions
from .autodiff import Var, backward, blackout, conv2d, mpi, relu
from .model import ModelConfig, build_model, forward

REL_FLOOR = 1e-8


@dataclass
class GradcheckReport:
    scope: str
    eps: float
    tolerance: float
    max_rel_err: float = 0.0
    worst: tuple = ()
    checked: int = 0
    skipped: int = 0
    per_input: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_err < self.tolerance

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        worst = f" worst={self.worst[0]}{list(self.worst[1])}" if self.worst else ""
        return (f"scope={self.scope} status={status} max_rel_err={self.max_rel_err:.3e} "
                f"tolerance={self.tolerance:g} eps={self.eps:g} checked={self.checked} "
                f"skipped={self.skipped}{worst}")


class Fragment:
    """Named inputs plus a builder ``fn(vars) -> (loss Var, seed grad, signature)``."""

    def __init__(self, name, inputs, fn):
        self.name = name
        self.inputs = {k: np.asarray(v, dtype=np.float64) for k, v in inputs.items()}
        self.fn = fn

    def evaluate(self, values, need_grad=True):
        vars_ = {k: Var(v.copy(), name=k) for k, v in values.items()}
        out, proj, sig = self.fn(vars_)
        loss = float(np.sum(out.value * proj))
        grads = None
        if need_grad:
            backward([(out, proj)])
            grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value))
                     for k, v in vars_.items()}
        return loss, grads, sig


def _same_region(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def gradcheck(fragment: Fragment, eps: float, tolerance: float, scope: str = None) -> GradcheckReport:
    """Compare every input gradient of ``fragment`` against central differences."""
    report = GradcheckReport(scope or fragment.name, eps, tolerance)
    base = fragment.inputs
    _, grads, sig0 = fragment.evaluate(base)
    for name, value in base.items():
        worst_here = 0.0
        for idx in np.ndindex(value.shape):
            plus = {k: v.copy() for k, v in base.items()}
            minus = {k: v.copy() for k, v in base.items()}
            plus[name][idx] += eps
            minus[name][idx] -= eps
            lp, _, sp = fragment.evaluate(plus, need_grad=False)
            lm, _, sm = fragment.evaluate(minus, need_grad=False)
            if not (_same_region(sig0, sp) and _same_region(sig0, sm)):
                report.skipped += 1
                continue
            numeric = (lp - lm) / (2 * eps)
            analytic = float(grads[name][idx])
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)
            report.checked += 1
            worst_here = max(worst_here, err)
            if err >= report.max_rel_err:
                report.max_rel_err = err
                report.worst = (name, idx)
        report.per_input[name] = worst_here
    return report


def _relu_sig(v: Var):
    return v.value > 0


def conv_fragment(seed=0, c_in=2, c_out=3, size=6, stride=1):
    """conv3x3 -> ReLU with a random linear read-out."""
    rng = np.random.default_rng(seed)
    inputs = {"x": rng.normal(size=(1, c_in, size, size)),
              "weight": rng.normal(size=(c_out, c_in, 3, 3)) * 0.5,
              "bias": rng.normal(size=c_out) * 0.1}
    ho = (size - 1) // stride + 1
    proj = rng.normal(size=(1, c_out, ho, ho))

    def fn(v):
        pre = conv2d(v["x"], v["weight"], v["bias"], stride)
        return relu(pre), proj, (_relu_sig(pre),)

    return Fragment("conv", inputs, fn)


def _distinct_values(rng, shape, spacing=0.1):
    # a shuffled grid of well separated values keeps max selections tie-free
    n = int(np.prod(shape))
    vals = (rng.permutation(n) - n / 3) * spacing
    return vals.reshape(shape)


def mpi_op_fragment(seed=0, channels=1, size=5, opts=MpiOptions(boundary_erosion_radius=0)):
    """MPI alone on a tie-free instance with a random foreground blob."""
    rng = np.random.default_rng(seed)
    mask = np.ones((1, size, size), dtype=np.uint8)
    y, x = rng.integers(0, size - 2, size=2)
    mask[0, y:y + 2, x:x + 3] = 0
    inputs = {"features": _distinct_values(rng, (1, channels, size, size))}
    proj = rng.normal(size=(1, channels, size, size))

    def fn(v):
        out = mpi(v["features"], mask, opts)
        return out, proj, (np.argsort(v["features"].value, axis=None),)

    return Fragment("mpi-op", inputs, fn)


def mpi_sandwich_fragment(seed=0, size=8, channels=2, opts=MpiOptions()):
    """conv3x3 -> MPI -> conv3x3, checked for inputs and both convs' parameters."""
    rng = np.random.default_rng(seed)
    mask = np.ones((1, size, size), dtype=np.uint8)
    mask[0, 2:6, 3:7] = 0
    inputs = {"x": rng.normal(size=(1, 2, size, size)),
              "w1": rng.normal(size=(channels, 2, 3, 3)) * 0.5,
              "b1": rng.normal(size=channels) * 0.1,
              "w2": rng.normal(size=(2, channels, 3, 3)) * 0.5,
              "b2": rng.normal(size=2) * 0.1}
    proj = rng.normal(size=(1, 2, size, size))

    def fn(v):
        f = conv2d(v["x"], v["w1"], v["b1"])
        g = mpi(f, mask, opts)
        out = conv2d(g, v["w2"], v["b2"])
        # the region is fixed by which value wins each fill
        return out, proj, (g.meta.source,)

    return Fragment("mpi", inputs, fn)


def blackout_fragment(seed=0, size=6):
    rng = np.random.default_rng(seed)
    mask = np.ones((1, size, size), dtype=np.uint8)
    mask[0, 1:4, 2:5] = 0
    inputs = {"x": rng.normal(size=(1, 2, size, size))}
    proj = rng.normal(size=(1, 2, size, size))

    def fn(v):
        return blackout(v["x"], mask), proj, ()

    return Fragment("blackout", inputs, fn), mask


def full_fragment(seed=0, size=32, position="mid"):
    """The whole toy model at a tiny size; the check covers all parameters."""
    cfg = ModelConfig(widths=(2, 3, 3), decoder_width=2, aux_width=2, mpi_position=position,
                      foreground_mode="ground_truth", seed=seed)
    model = build_model(cfg).astype(np.float64)
    rng = np.random.default_rng(seed)
    images = rng.uniform(size=(1, 3, size, size))
    masks = np.ones((1, size, size), dtype=np.uint8)
    masks[0, size // 4:size // 2, size // 4:size // 2 + 4] = 0
    proj_bg = rng.normal(size=(1, cfg.n_classes, size, size))
    proj_fg = rng.normal(size=(1, 1, size, size))
    proj = np.concatenate([proj_bg, proj_fg], axis=1)
    inputs = {k: v.value for k, v in model.params.items()}

    def fn(v):
        for k, var in v.items():
            model.params[k] = var
        res = forward(model, images, masks)
        sig = tuple(c.meta.source if c.meta is not None else _relu_sig(c)
                    for c in res.caches.values())
        out = _concat_channels(res.bg_logits, res.fg_logits)
        return out, proj, sig

    return Fragment("full-fragment", inputs, fn)


def _concat_channels(a: Var, b: Var) -> Var:
    ca = a.value.shape[1]
    return Var(np.concatenate([a.value, b.value], axis=1), (a, b),
               lambda g: (g[:, :ca], g[:, ca:]))


SCOPES = {
    # scope -> (fragment factory, eps, tolerance)
    "conv": (conv_fragment, 1e-6, 1e-6),
    "mpi": (mpi_sandwich_fragment, 1e-2, 1e-4),
    "full-fragment": (full_fragment, 1e-6, 1e-4),
}


def run_scope(scope: str, seed: int = 0) -> GradcheckReport:
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}; choose from {sorted(SCOPES)}")
    factory, eps, tol = SCOPES[scope]
    return gradcheck(factory(seed), eps, tol, scope=scope)
