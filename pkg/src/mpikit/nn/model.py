"""Two-branch toy network: a background segmenter with a pluggable occlusion
handler, plus a lightweight foreground head that feeds it the mask."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..masks import binarize_foreground_logits, downsample_mask, intersect_backgrounds
from ..mpi import MpiOptions, boundary_mask
from ..tensor import PoolMode
from .autodiff import Var, blackout, conv2d, mpi, relu, upsample2x

POSITIONS = ("input", "mid", "late", "output", "none")
HANDLERS = ("mpi", "blackout", "passthrough")
FOREGROUND_MODES = ("predicted", "ground_truth")

# spatial downsampling factor at each place the occlusion handler can sit
_POSITION_FACTOR = {"input": 1, "mid": 4, "late": 4, "output": 1}


@dataclass(frozen=True)
class ModelConfig:
    n_classes: int = 3
    widths: tuple = (8, 16, 32)
    decoder_width: int = 16
    aux_width: int = 8
    mpi_position: str = "mid"
    foreground_mode: str = "predicted"
    occlusion_handling: str = "mpi"
    share_features: bool = False
    fake_masks: bool = True
    fake_mask_count: int = 3
    fake_mask_frac_min: float = 0.1
    fake_mask_frac_max: float = 0.4
    erosion_radius: int = 1
    pool_mode: Optional[str] = None
    fg_threshold: float = 0.5
    zero_init_head: bool = False
    seed: int = 0

    def __post_init__(self):
        if len(self.widths) != 3 or min(self.widths) < 1:
            raise ValueError("widths must be three positive channel counts")
        if min(self.decoder_width, self.aux_width, self.n_classes) < 1:
            raise ValueError("decoder_width, aux_width and n_classes must be >= 1")
        if self.mpi_position not in POSITIONS:
            raise ValueError(f"mpi_position must be one of {POSITIONS}")
        if self.occlusion_handling not in HANDLERS:
            raise ValueError(f"occlusion_handling must be one of {HANDLERS}")
        if self.foreground_mode not in FOREGROUND_MODES:
            raise ValueError(f"foreground_mode must be one of {FOREGROUND_MODES}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    def mpi_options(self) -> MpiOptions:
        mode = self.pool_mode
        if mode is None:
            # logits can be negative, so zero filling would be wrong there
            mode = "masked" if self.mpi_position == "output" else "zero"
        return MpiOptions(boundary_erosion_radius=self.erosion_radius, pool_mode=PoolMode.parse(mode))

    @property
    def handles_occlusion(self) -> bool:
        return self.mpi_position != "none" and self.occlusion_handling != "passthrough"


def _layer_specs(cfg: ModelConfig):
    """(name, in_channels, out_channels, stride) for every conv, in execution order."""
    w1, w2, w3 = cfg.widths
    specs = [
        ("enc1a", 3, w1, 2), ("enc1b", w1, w1, 1),
        ("enc2a", w1, w2, 2), ("enc2b", w2, w2, 1),
        ("enc3a", w2, w3, 1), ("enc3b", w3, w3, 1),
        ("dec1", w3, cfg.decoder_width, 1), ("dec2", cfg.decoder_width, cfg.n_classes, 1),
    ]
    if cfg.share_features:
        specs.append(("fg_head", w1, 1, 1))
    else:
        specs += [("aux1", 3, cfg.aux_width, 2), ("aux2", cfg.aux_width, cfg.aux_width, 1),
                  ("fg_head", cfg.aux_width, 1, 1)]
    return specs


def expected_param_count(cfg: ModelConfig) -> int:
    return sum((cin * 9 + 1) * cout for _, cin, cout, _ in _layer_specs(cfg))


class Model:
    def __init__(self, cfg: ModelConfig, params, strides):
        self.cfg = cfg
        self.params = params
        self.strides = strides

    def parameters(self):
        return list(self.params.values())

    def param_count(self) -> int:
        return int(sum(p.value.size for p in self.params.values()))

    def state_dict(self):
        return OrderedDict((k, v.value.copy()) for k, v in self.params.items())

    def load_state_dict(self, state):
        for k, v in state.items():
            if k not in self.params:
                raise KeyError(f"unexpected parameter {k!r}")
            if v.shape != self.params[k].value.shape:
                raise ValueError(f"shape mismatch for {k!r}: {v.shape} vs {self.params[k].value.shape}")
            self.params[k].value = np.asarray(v, dtype=self.params[k].value.dtype).copy()

    def astype(self, dtype):
        for p in self.params.values():
            p.value = p.value.astype(dtype)
        return self

    def conv(self, name, x):
        return conv2d(x, self.params[name + ".weight"], self.params[name + ".bias"], self.strides[name])


def build_model(cfg: ModelConfig) -> Model:
    """Instantiate parameters with fan-in scaled uniform init from ``cfg.seed``."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params, strides = OrderedDict(), {}
    for name, cin, cout, stride in _layer_specs(cfg):
        bound = np.sqrt(6.0 / (cin * 9))
        w = rng.uniform(-bound, bound, size=(cout, cin, 3, 3)).astype(np.float32)
        if cfg.zero_init_head and name == "dec2":
            w[:] = 0.0
        params[name + ".weight"] = Var(w, name=name + ".weight")
        params[name + ".bias"] = Var(np.zeros(cout, dtype=np.float32), name=name + ".bias")
        strides[name] = stride
    return Model(cfg, params, strides)


@dataclass
class ForwardResult:
    bg_logits: Var
    fg_logits: Var
    mask: Optional[np.ndarray] = None  # full-resolution mask handed to the occlusion node
    caches: dict = field(default_factory=dict)


def _occlusion(model: Model, x: Var, mask_full):
    cfg = model.cfg
    m = downsample_mask(mask_full, _POSITION_FACTOR[cfg.mpi_position])
    if cfg.occlusion_handling == "mpi":
        return mpi(x, m, cfg.mpi_options())
    # blackout drops exactly the positions MPI would refill
    return blackout(x, boundary_mask(m, cfg.mpi_options()))


def forward(model: Model, images, masks=None, fake_masks=None) -> ForwardResult:
    """Run both branches.

    ``masks`` are ground-truth foreground masks (N, H, W); they are required
    in ``ground_truth`` foreground mode. ``fake_masks`` (N, H, W), if given,
    are intersected with the real/predicted mask before the occlusion node.
    """
    cfg = model.cfg
    # a Var input lets callers read the gradient with respect to the pixels
    x = images if isinstance(images, Var) else None
    images = np.asarray(images.value if x is not None else images)
    if images.ndim != 4 or images.shape[1] != 3:
        raise ValueError(f"images must be (N, 3, H, W), got {images.shape}")
    n, _, h, w = images.shape
    if h % 4 or w % 4:
        raise ValueError("image height and width must be multiples of 4")
    if x is None:
        dtype = model.params["enc1a.weight"].value.dtype
        x = Var(images.astype(dtype, copy=False), name="images")
    caches = {}

    def act(name, v):
        out = relu(model.conv(name, v))
        caches[name] = out
        return out

    e1 = None
    if cfg.share_features:
        e1 = act("enc1b", act("enc1a", x))
        fg_half = model.conv("fg_head", e1)
    else:
        fg_half = model.conv("fg_head", act("aux2", act("aux1", x)))
    fg_logits = upsample2x(fg_half)

    mask_full = None
    if cfg.handles_occlusion:
        if cfg.foreground_mode == "ground_truth":
            if masks is None:
                raise ValueError("ground_truth foreground mode needs masks")
            mask_full = np.asarray(masks, dtype=np.uint8)
        else:
            mask_full = binarize_foreground_logits(fg_logits.value, cfg.fg_threshold)
        if mask_full.shape != (n, h, w):
            raise ValueError(f"masks must be {(n, h, w)}, got {mask_full.shape}")
        if fake_masks is not None:
            mask_full = intersect_backgrounds(mask_full, fake_masks)

    def occlude_at(position, v):
        if mask_full is not None and cfg.mpi_position == position:
            v = _occlusion(model, v, mask_full)
            caches["occluded_" + position] = v
        return v

    # the raw RGB input goes through the occlusion node first, if placed there
    x_main = occlude_at("input", x)
    if e1 is None or x_main is not x:
        e1 = act("enc1b", act("enc1a", x_main))
    e2 = occlude_at("mid", act("enc2b", act("enc2a", e1)))
    e3 = occlude_at("late", act("enc3b", act("enc3a", e2)))
    d1 = upsample2x(act("dec1", e3))
    bg_logits = occlude_at("output", upsample2x(model.conv("dec2", d1)))
    return ForwardResult(bg_logits, fg_logits, mask_full, caches)


def predict(model: Model, images, masks=None, batch_size=16):
    """Argmax background labels and binarized foreground masks, batched."""
    labels, fg = [], []
    for i in range(0, len(images), batch_size):
        res = forward(model, images[i:i + batch_size],
                      None if masks is None else masks[i:i + batch_size])
        labels.append(np.argmax(res.bg_logits.value, axis=1).astype(np.uint8))
        fg.append(binarize_foreground_logits(res.fg_logits.value, model.cfg.fg_threshold))
    return np.concatenate(labels), np.concatenate(fg)


def with_overrides(cfg: ModelConfig, **kw) -> ModelConfig:
    return replace(cfg, **kw)
