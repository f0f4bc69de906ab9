"""Backend-dispatching ops: the same model code runs on the autodiff tape
(training) or raw ndarrays (fast inference). Both paths use identical
float64 arithmetic, so outputs match bit for bit."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def tanh(x):
    return x.tanh() if is_tensor(x) else np.tanh(x)


def sigmoid(x):
    return x.sigmoid() if is_tensor(x) else 1.0 / (1.0 + np.exp(-x))


def silu(x):
    # same operation order as the tape path so both backends agree bitwise
    return x.silu() if is_tensor(x) else x * (1.0 / (1.0 + np.exp(-x)))


def relu(x):
    return x.relu() if is_tensor(x) else np.maximum(x, 0.0)


def softmax(x, axis=-1):
    if is_tensor(x):
        return ad.softmax(x, axis=axis)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def layernorm(x, g, b, eps=1e-5):
    if is_tensor(x) or is_tensor(g):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        return xc * ((var + eps) ** -0.5) * g + b
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc * ((var + eps) ** -0.5) * g + b


def embed(table, idx):
    return ad.gather_rows(table, idx) if is_tensor(table) else table[idx]


def cat(parts, axis=-1):
    if any(is_tensor(p) for p in parts):
        parts = [p if is_tensor(p) else Tensor(p) for p in parts]
        return ad.concat(parts, axis=axis)
    return np.concatenate(parts, axis=axis)


def stk(parts, axis=0):
    if any(is_tensor(p) for p in parts):
        parts = [p if is_tensor(p) else Tensor(p) for p in parts]
        return ad.stack(parts, axis=axis)
    return np.stack(parts, axis=axis)


def causal_softmax(scores, t_len: int):
    mask = np.tril(np.ones((t_len, t_len), dtype=bool))
    if is_tensor(scores):
        return softmax(ad.where_mask(mask, scores, -1e30), axis=-1)
    return softmax(np.where(mask, scores, -1e30), axis=-1)


def swap_last(x):
    if is_tensor(x):
        return x.transpose(*range(x.ndim - 2), x.ndim - 1, x.ndim - 2)
    return np.swapaxes(x, -1, -2)


def value(x) -> np.ndarray:
    return x.data if is_tensor(x) else x
