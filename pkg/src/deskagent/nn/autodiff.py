"""Reverse-mode automatic differentiation over dense float64 arrays.

A small tape-based graph: each Tensor remembers its parents and a closure
that routes the incoming gradient to them. Only the primitives needed by
the dialogue model, the connection module and the diffusion expert are
provided; everything runs at 64-bit precision so finite-difference checks
are tight.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operands are not shape-compatible."""


def _sum_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Undo numpy broadcasting: reduce ``grad`` back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Node in the autodiff graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # keep numpy from absorbing Tensors into object arrays; reflected
    # operators below handle ndarray <op> Tensor instead
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- graph plumbing ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from a scalar output through the tape."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = _sum_to_shape(np.asarray(grad, dtype=np.float64), self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        out = _node(self.data + other.data, (self, other))

        def back(g):
            if self.requires_grad or self._parents:
                self._accumulate(g)
            if other.requires_grad or other._parents:
                other._accumulate(g)

        out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _node(-self.data, (self,))
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other)
        out = _node(self.data * other.data, (self, other))

        def back(g):
            if self.requires_grad or self._parents:
                self._accumulate(g * other.data)
            if other.requires_grad or other._parents:
                other._accumulate(g * self.data)

        out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        out = _node(self.data / other.data, (self, other))

        def back(g):
            if self.requires_grad or self._parents:
                self._accumulate(g / other.data)
            if other.requires_grad or other._parents:
                other._accumulate(-g * self.data / (other.data**2))

        out._backward = back
        return out

    def __pow__(self, p: float):
        out = _node(self.data**p, (self,))
        out._backward = lambda g: self._accumulate(g * p * self.data ** (p - 1))
        return out

    def __matmul__(self, other):
        other = _as_tensor(other)
        try:
            out = _node(np.matmul(self.data, other.data), (self, other))
        except ValueError as exc:
            raise ShapeError(f"matmul {self.shape} @ {other.shape}") from exc

        def back(g):
            a, b = self.data, other.data
            if self.requires_grad or self._parents:
                if b.ndim == 1:
                    ga = np.multiply.outer(g, b) if g.ndim else g * b
                else:
                    ga = np.matmul(g, np.swapaxes(b, -1, -2))
                self._accumulate(_sum_to_shape(ga, a.shape))
            if other.requires_grad or other._parents:
                if a.ndim == 1:
                    gb = np.multiply.outer(a, g)
                else:
                    gb = np.matmul(np.swapaxes(a, -1, -2), g)
                other._accumulate(_sum_to_shape(gb, b.shape))

        out._backward = back
        return out

    def __rmatmul__(self, other):
        return _as_tensor(other) @ self

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    # -- shape ops ---------------------------------------------------------

    def reshape(self, *shape):
        out = _node(self.data.reshape(*shape), (self,))
        out._backward = lambda g: self._accumulate(g.reshape(self.data.shape))
        return out

    def transpose(self, *axes):
        ax = axes or tuple(reversed(range(self.ndim)))
        inv = np.argsort(ax)
        out = _node(self.data.transpose(ax), (self,))
        out._backward = lambda g: self._accumulate(g.transpose(inv))
        return out

    def sum(self, axis=None, keepdims=False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape))

        out._backward = back
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def __getitem__(self, idx):
        out = _node(self.data[idx], (self,))

        def back(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accumulate(full)

        out._backward = back
        return out

    # -- elementwise nonlinearities ---------------------------------------

    def exp(self):
        val = np.exp(self.data)
        out = _node(val, (self,))
        out._backward = lambda g: self._accumulate(g * val)
        return out

    def log(self):
        out = _node(np.log(self.data), (self,))
        out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def tanh(self):
        val = np.tanh(self.data)
        out = _node(val, (self,))
        out._backward = lambda g: self._accumulate(g * (1.0 - val**2))
        return out

    def sigmoid(self):
        val = 1.0 / (1.0 + np.exp(-self.data))
        out = _node(val, (self,))
        out._backward = lambda g: self._accumulate(g * val * (1.0 - val))
        return out

    def relu(self):
        mask = self.data > 0
        out = _node(self.data * mask, (self,))
        out._backward = lambda g: self._accumulate(g * mask)
        return out

    def silu(self):
        sig = 1.0 / (1.0 + np.exp(-self.data))
        out = _node(self.data * sig, (self,))
        out._backward = lambda g: self._accumulate(
            g * (sig * (1.0 + self.data * (1.0 - sig)))
        )
        return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    out = Tensor(data)
    out._parents = tuple(p for p in parents if p.requires_grad or p._parents)
    return out


# -- free functions --------------------------------------------------------


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    out = _node(np.concatenate(datas, axis=axis), tuple(tensors))
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._parents:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    out._backward = back
    return out


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    out = _node(np.stack([t.data for t in tensors], axis=axis), tuple(tensors))

    def back(g):
        for i, t in enumerate(tensors):
            if t.requires_grad or t._parents:
                t._accumulate(np.take(g, i, axis=axis))

    out._backward = back
    return out


def gather_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Embedding lookup: rows of ``table`` selected by integer ``indices``."""
    idx = np.asarray(indices)
    out = _node(table.data[idx], (table,))

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        table._accumulate(full)

    out._backward = back
    return out


def where_mask(mask: np.ndarray, x: Tensor, fill: float) -> Tensor:
    """x where mask is True, constant ``fill`` elsewhere (used for causal masks)."""
    out = _node(np.where(mask, x.data, fill), (x,))
    out._backward = lambda g: x._accumulate(np.where(mask, g, 0.0))
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    val = e / e.sum(axis=axis, keepdims=True)
    out = _node(val, (x,))

    def back(g):
        dot = (g * val).sum(axis=axis, keepdims=True)
        x._accumulate(val * (g - dot))

    out._backward = back
    return out


def softmax_cross_entropy(
    logits: Tensor, targets: np.ndarray, mask: np.ndarray | None = None
) -> Tensor:
    """Mean token-level cross entropy of ``logits`` (..., V) against integer targets.

    ``mask`` (same shape as targets, 0/1) selects which positions contribute;
    the loss is averaged over the selected positions.
    """
    t = np.asarray(targets)
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logz
    picked = np.take_along_axis(logp, t[..., None], axis=-1)[..., 0]
    if mask is None:
        mask = np.ones_like(picked)
    mask = np.asarray(mask, dtype=np.float64)
    denom = max(mask.sum(), 1.0)
    loss_val = -(picked * mask).sum() / denom
    out = _node(np.asarray(loss_val), (logits,))

    def back(g):
        probs = np.exp(logp)
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, t[..., None], 1.0, axis=-1)
        grad = (probs - onehot) * mask[..., None] / denom
        logits._accumulate(g * grad)

    out._backward = back
    return out


def mse(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error against a constant target."""
    diff = pred.data - np.asarray(target, dtype=np.float64)
    out = _node(np.asarray((diff**2).mean()), (pred,))
    out._backward = lambda g: pred._accumulate(g * 2.0 * diff / diff.size)
    return out
