"""Layer primitives built on the autodiff tape.

Layers register their parameters in a ParamStore under a name prefix so
freeze sets and checkpoints can address whole submodules by prefix.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat, gather_rows, softmax, where_mask
from .params import ParamStore


def _init(rng: np.random.Generator, shape, scale=None) -> np.ndarray:
    if scale is None:
        scale = 1.0 / np.sqrt(shape[0])
    return rng.normal(0.0, scale, size=shape)


class Linear:
    def __init__(self, store: ParamStore, prefix: str, d_in: int, d_out: int,
                 rng: np.random.Generator, zero_init: bool = False):
        w = np.zeros((d_in, d_out)) if zero_init else _init(rng, (d_in, d_out))
        self.w = store.add(f"{prefix}.w", w)
        self.b = store.add(f"{prefix}.b", np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class Embedding:
    def __init__(self, store: ParamStore, prefix: str, n: int, d: int,
                 rng: np.random.Generator):
        self.table = store.add(f"{prefix}.table", rng.normal(0.0, 0.02, (n, d)))

    def __call__(self, idx: np.ndarray) -> Tensor:
        return gather_rows(self.table, idx)


class LayerNorm:
    def __init__(self, store: ParamStore, prefix: str, d: int, eps: float = 1e-5):
        self.g = store.add(f"{prefix}.g", np.ones(d))
        self.b = store.add(f"{prefix}.b", np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        return xc * ((var + self.eps) ** -0.5) * self.g + self.b


class CausalSelfAttention:
    """Single-head causal attention over (..., T, D) inputs."""

    def __init__(self, store: ParamStore, prefix: str, d: int,
                 rng: np.random.Generator):
        self.wq = Linear(store, f"{prefix}.q", d, d, rng)
        self.wk = Linear(store, f"{prefix}.k", d, d, rng)
        self.wv = Linear(store, f"{prefix}.v", d, d, rng)
        self.wo = Linear(store, f"{prefix}.o", d, d, rng)
        self.d = d

    def __call__(self, x: Tensor) -> Tensor:
        t_len = x.shape[-2]
        q, k, v = self.wq(x), self.wk(x), self.wv(x)
        scores = (q @ k.transpose(*range(k.ndim - 2), k.ndim - 1, k.ndim - 2)) * (
            1.0 / np.sqrt(self.d)
        )
        causal = np.tril(np.ones((t_len, t_len), dtype=bool))
        scores = where_mask(causal, scores, -1e30)
        att = softmax(scores, axis=-1)
        return self.wo(att @ v)


class TransformerBlock:
    def __init__(self, store: ParamStore, prefix: str, d: int,
                 rng: np.random.Generator, d_ff: int | None = None):
        d_ff = d_ff or 4 * d
        self.ln1 = LayerNorm(store, f"{prefix}.ln1", d)
        self.attn = CausalSelfAttention(store, f"{prefix}.attn", d, rng)
        self.ln2 = LayerNorm(store, f"{prefix}.ln2", d)
        self.fc1 = Linear(store, f"{prefix}.fc1", d, d_ff, rng)
        self.fc2 = Linear(store, f"{prefix}.fc2", d_ff, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.fc2(self.fc1(self.ln2(x)).silu())


class GRUCell:
    """Gated recurrent cell: h' = (1-z)*h + z*tanh(W_n x + r*(U_n h))."""

    def __init__(self, store: ParamStore, prefix: str, d_in: int, d_h: int,
                 rng: np.random.Generator):
        self.wz = Linear(store, f"{prefix}.wz", d_in + d_h, d_h, rng)
        self.wr = Linear(store, f"{prefix}.wr", d_in + d_h, d_h, rng)
        self.wn_x = Linear(store, f"{prefix}.wn_x", d_in, d_h, rng)
        self.wn_h = Linear(store, f"{prefix}.wn_h", d_h, d_h, rng)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        xh = concat([x, h], axis=-1)
        z = self.wz(xh).sigmoid()
        r = self.wr(xh).sigmoid()
        n = (self.wn_x(x) + r * self.wn_h(h)).tanh()
        return (1.0 - z) * h + z * n
