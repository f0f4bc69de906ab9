"""Named parameter store with freeze support and byte-level hashing."""

from __future__ import annotations

import hashlib

import numpy as np

from .autodiff import Tensor


class ParamStore:
    """Map of unique names to trainable tensors, some of which may be frozen.

    Frozen parameters still take part in forward passes but are skipped by
    the optimizer; their bytes must survive any number of updates untouched.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.frozen: set[str] = set()

    def add(self, name: str, value: np.ndarray, frozen: bool = False) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        if frozen:
            self.frozen.add(name)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return sorted(self.params)

    def trainable(self) -> list[str]:
        return [n for n in self.names() if n not in self.frozen]

    def freeze(self, prefix: str) -> None:
        for n in self.params:
            if n.startswith(prefix):
                self.frozen.add(n)

    def unfreeze(self, prefix: str) -> None:
        self.frozen = {n for n in self.frozen if not n.startswith(prefix)}

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def n_params(self, prefix: str = "") -> int:
        return sum(
            t.data.size for n, t in self.params.items() if n.startswith(prefix)
        )

    def subset_hash(self, prefix: str = "") -> str:
        """SHA-256 over the raw bytes of all parameters under ``prefix``."""
        h = hashlib.sha256()
        for n in self.names():
            if n.startswith(prefix):
                h.update(n.encode())
                h.update(np.ascontiguousarray(self.params[n].data).tobytes())
        return h.hexdigest()

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for n in self.names():
            out.add(n, self.params[n].data.copy(), frozen=n in self.frozen)
        return out
