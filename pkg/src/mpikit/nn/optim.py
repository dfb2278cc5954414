from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam with step learning-rate decay. Defaults follow the published training recipe."""

    learning_rate: float = 1e-4
    beta1: float = 0.6
    beta2: float = 0.9
    eps: float = 1e-8
    weight_decay: float = 1e-4
    decoupled_weight_decay: bool = True
    epochs: int = 50
    batch_size: int = 8
    lr_decay_factor: float = 0.1
    lr_decay_every_epochs: int = 20

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.lr_decay_every_epochs < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and lr_decay_every_epochs >= 1 required")

    def lr_at(self, epoch: int) -> float:
        """Learning rate during 1-based ``epoch``."""
        steps = (epoch - 1) // self.lr_decay_every_epochs
        return self.learning_rate * self.lr_decay_factor ** steps


class Adam:
    def __init__(self, params, cfg: OptimizerConfig):
        self.params = list(params)
        self.cfg = cfg
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self, lr: float):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.value)
            if c.weight_decay and not c.decoupled_weight_decay:
                g = g + c.weight_decay * p.value
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + c.eps)
            if c.weight_decay and c.decoupled_weight_decay:
                update = update + c.weight_decay * p.value
            p.value = (p.value - np.asarray(lr * update, dtype=p.value.dtype)).astype(p.value.dtype)
