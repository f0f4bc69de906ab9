"""Adam with decoupled weight decay, honoring the store's freeze set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ParamStore


@dataclass
class OptimConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


class AdamW:
    def __init__(self, store: ParamStore, config: OptimConfig):
        self.store = store
        self.config = config
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self) -> None:
        """Apply one update from accumulated gradients; frozen names untouched."""
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for name in self.store.trainable():
            p = self.store[name]
            if p.grad is None:
                continue
            g = p.grad
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m = c.beta1 * m + (1.0 - c.beta1) * g
            v = c.beta2 * v + (1.0 - c.beta2) * g * g
            self.m[name], self.v[name] = m, v
            update = (m / bc1) / (np.sqrt(v / bc2) + c.eps)
            if c.weight_decay:
                p.data = p.data - c.lr * c.weight_decay * p.data
            p.data = p.data - c.lr * update
