"""Centered finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamStore


def grad_check(
    f: Callable[[ParamStore], "object"],
    store: ParamStore,
    h: float = 1e-5,
    n_coords: int = 20,
    rng: np.random.Generator | None = None,
    atol: float = 1e-3,
) -> float:
    """Max relative error between reverse-mode and finite-difference gradients.

    ``f`` maps the store to a scalar Tensor. A sample of coordinates from
    every unfrozen parameter is perturbed by +/- h; frozen parameters are
    skipped entirely (they carry no update-relevant gradient).
    """
    rng = rng or np.random.default_rng(0)
    store.zero_grad()
    loss = f(store)
    loss.backward()
    analytic = {n: (store[n].grad.copy() if store[n].grad is not None
                    else np.zeros_like(store[n].data))
                for n in store.trainable()}

    max_rel = 0.0
    for name in store.trainable():
        p = store[name]
        flat = p.data.reshape(-1)
        size = flat.size
        coords = (range(size) if size <= n_coords
                  else rng.choice(size, size=n_coords, replace=False))
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = f(store).item()
            flat[i] = orig - h
            fm = f(store).item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = analytic[name].reshape(-1)[i]
            # atol floor keeps roundoff noise around true-zero gradients
            # (e.g. softmax shift invariance) from dominating the ratio
            denom = max(abs(a), abs(numeric), atol)
            max_rel = max(max_rel, abs(a - numeric) / denom)
    return max_rel
