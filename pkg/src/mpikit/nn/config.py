"""key=value training configs mapped onto ModelConfig / OptimizerConfig."""
from __future__ import annotations

import dataclasses

from ..io import ConfigError, format_config, parse_config
from .model import ModelConfig
from .optim import OptimizerConfig

# config key -> (target, field name, type)
_KEYS = {
    "lr": ("opt", "learning_rate", float),
    "beta1": ("opt", "beta1", float),
    "beta2": ("opt", "beta2", float),
    "eps": ("opt", "eps", float),
    "weight_decay": ("opt", "weight_decay", float),
    "decoupled_weight_decay": ("opt", "decoupled_weight_decay", bool),
    "epochs": ("opt", "epochs", int),
    "batch_size": ("opt", "batch_size", int),
    "lr_decay_factor": ("opt", "lr_decay_factor", float),
    "lr_decay_every": ("opt", "lr_decay_every_epochs", int),
    "n_classes": ("model", "n_classes", int),
    "widths": ("model", "widths", tuple),
    "decoder_width": ("model", "decoder_width", int),
    "aux_width": ("model", "aux_width", int),
    "mpi_position": ("model", "mpi_position", str),
    "foreground_mode": ("model", "foreground_mode", str),
    "occlusion_handling": ("model", "occlusion_handling", str),
    "share_features": ("model", "share_features", bool),
    "fake_masks": ("model", "fake_masks", bool),
    "fake_mask_count": ("model", "fake_mask_count", int),
    "fake_mask_frac_min": ("model", "fake_mask_frac_min", float),
    "fake_mask_frac_max": ("model", "fake_mask_frac_max", float),
    "erosion": ("model", "erosion_radius", int),
    "pool_mode": ("model", "pool_mode", str),
    "fg_threshold": ("model", "fg_threshold", float),
    "zero_init_head": ("model", "zero_init_head", bool),
    "seed": ("model", "seed", int),
}
SCHEMA = {k: kind for k, (_, _, kind) in _KEYS.items()}


def configs_from_dict(values: dict, model: ModelConfig = None, opt: OptimizerConfig = None):
    model = model or ModelConfig()
    opt = opt or OptimizerConfig()
    m_kw, o_kw = {}, {}
    for key, value in values.items():
        target, name, _ = _KEYS[key]
        (m_kw if target == "model" else o_kw)[name] = value
    return dataclasses.replace(model, **m_kw), dataclasses.replace(opt, **o_kw)


def load_train_config(text, model: ModelConfig = None, opt: OptimizerConfig = None):
    """Parse config text; unspecified keys keep the defaults (or the given base configs)."""
    values = parse_config(text, SCHEMA)
    try:
        return configs_from_dict(values, model, opt)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def dump_train_config(model: ModelConfig, opt: OptimizerConfig) -> str:
    values = {}
    for key, (target, name, _) in _KEYS.items():
        values[key] = getattr(model if target == "model" else opt, name)
    return format_config(values)
