"""Connection module: FiLM-modulates observation features with the
instruction embedding to produce the diffusion expert's condition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ParamStore
from .nn import ops


class SimilarityError(ValueError):
    """Cosine similarity is undefined for zero vectors."""


@dataclass(frozen=True)
class ConnectConfig:
    d_feat: int = 442
    d_embed: int = 64
    proprio_dim: int = 4

    @property
    def condition_dim(self) -> int:
        return self.d_feat + self.proprio_dim


class Connector:
    """Trainable affine heads mapping the instruction embedding to (gamma, beta).

    Zero-initialized with a unit offset on gamma, so before stage-2
    training the modulation is exactly the identity map.
    """

    def __init__(self, store: ParamStore, config: ConnectConfig,
                 create: bool = True):
        self.store = store
        self.cfg = config
        if create:
            store.add("con.gamma.w", np.zeros((config.d_embed, config.d_feat)))
            store.add("con.gamma.b", np.zeros(config.d_feat))
            store.add("con.beta.w", np.zeros((config.d_embed, config.d_feat)))
            store.add("con.beta.b", np.zeros(config.d_feat))

    def _p(self, name: str, differentiable: bool):
        t = self.store[name]
        return t if differentiable else t.data

    def film_params(self, e, differentiable: bool = False):
        gamma = 1.0 + e @ self._p("con.gamma.w", differentiable) \
            + self._p("con.gamma.b", differentiable)
        beta = e @ self._p("con.beta.w", differentiable) \
            + self._p("con.beta.b", differentiable)
        return gamma, beta

    @staticmethod
    def modulate(f, gamma, beta):
        """gamma * F + beta, broadcast over the spatial axis of F (R, D)."""
        if ops.value(f).shape[-1] != ops.value(gamma).shape[-1]:
            from .nn import ShapeError
            raise ShapeError("feature/FiLM channel mismatch")
        return f * gamma + beta

    def make_condition(self, e, f, proprio, differentiable: bool = False,
                       modulation: bool = True):
        """Condition vector: spatial mean of modulated features ++ proprio.

        With ``modulation`` off (ablation), the instruction embedding is
        ignored entirely and the condition is a pure observation summary.
        """
        if modulation:
            gamma, beta = self.film_params(e, differentiable)
            f = self.modulate(f, gamma, beta)
        pooled = f.mean(axis=0) if ops.is_tensor(f) else f.mean(axis=0)
        return ops.cat([pooled, proprio if ops.is_tensor(proprio)
                        else np.asarray(proprio, dtype=np.float64)], axis=-1)


def condition_similarity(conditions: list[np.ndarray]) -> np.ndarray:
    """Pairwise cosine similarity matrix; symmetric with unit diagonal."""
    vecs = [np.asarray(c, dtype=np.float64) for c in conditions]
    n = len(vecs)
    if any(np.linalg.norm(v) == 0.0 for v in vecs):
        raise SimilarityError("zero-norm condition vector")
    out = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            if np.array_equal(vecs[i], vecs[j]):
                # bitwise-equal vectors are exactly parallel; skip the
                # division so roundoff cannot pull the value off 1.0
                s = 1.0
            else:
                s = float(np.dot(vecs[i], vecs[j])
                          / (np.linalg.norm(vecs[i]) * np.linalg.norm(vecs[j])))
            out[i, j] = out[j, i] = s
    return out
