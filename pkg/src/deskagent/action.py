"""Diffusion action expert.

Denoises 50-step action chunks (flattened to 200 values) conditioned on
the fused instruction/observation vector from the connection module.
Training regresses the clean chunk from its noised version; inference
runs ancestral sampling from pure noise down to a clean chunk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import ParamStore, mse
from .nn import ops
from .world import ActionChunk, WorldConfig, CHUNK_LEN, ACTION_DIM


class NormalizerError(ValueError):
    """Normalization statistics are missing or degenerate."""


@dataclass(frozen=True)
class DiffusionConfig:
    # beta_end chosen so alpha_bar at the final step is ~2e-3: ancestral
    # sampling starts from standard normal noise, so the forward process
    # must actually reach it
    timesteps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.12
    horizon: int = CHUNK_LEN
    action_dim: int = ACTION_DIM
    condition_dim: int = 446
    hidden: int = 256
    n_blocks: int = 3
    d_temb: int = 32
    # sampling-time clamp on the predicted clean chunk, in normalized
    # units; keeps the ancestral chain from diverging on inputs outside
    # the training distribution
    clip_clean: float = 8.0

    @property
    def flat_dim(self) -> int:
        return self.horizon * self.action_dim


def noise_schedule(cfg: DiffusionConfig):
    """Linear beta schedule and its cumulative-product alphas."""
    betas = np.linspace(cfg.beta_start, cfg.beta_end, cfg.timesteps)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return betas, alphas, alpha_bars


class ActionNormalizer:
    """Per-action-dimension affine normalization fit on demonstration chunks."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        if self.mean.shape != (ACTION_DIM,) or self.std.shape != (ACTION_DIM,):
            raise NormalizerError("stats must be per action dimension")
        if np.any(self.std <= 0):
            raise NormalizerError("non-positive std")

    @classmethod
    def fit(cls, chunks: list[np.ndarray]) -> "ActionNormalizer":
        steps = np.concatenate(
            [np.asarray(c).reshape(-1, ACTION_DIM) for c in chunks], axis=0)
        std = steps.std(axis=0)
        return cls(steps.mean(axis=0), np.maximum(std, 1e-3))

    def normalize(self, flat: np.ndarray) -> np.ndarray:
        steps = np.asarray(flat, dtype=np.float64).reshape(-1, ACTION_DIM)
        return ((steps - self.mean) / self.std).reshape(flat.shape)

    def denormalize(self, flat: np.ndarray) -> np.ndarray:
        steps = np.asarray(flat, dtype=np.float64).reshape(-1, ACTION_DIM)
        return (steps * self.std + self.mean).reshape(flat.shape)

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(),
                           "std": self.std.tolist()}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ActionNormalizer":
        d = json.loads(text)
        return cls(np.array(d["mean"]), np.array(d["std"]))


class VectorNormalizer:
    """Per-dimension affine standardization for condition vectors."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise NormalizerError("stats must be matching 1-d vectors")
        if np.any(self.std <= 0):
            raise NormalizerError("non-positive std")

    @classmethod
    def fit(cls, vectors: np.ndarray, floor: float = 1e-3
            ) -> "VectorNormalizer":
        v = np.asarray(vectors, dtype=np.float64)
        return cls(v.mean(axis=0), np.maximum(v.std(axis=0), floor))

    def normalize(self, v):
        # works for ndarray and autodiff tensors alike
        return (v - self.mean) * (1.0 / self.std)

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(),
                           "std": self.std.tolist()}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VectorNormalizer":
        d = json.loads(text)
        return cls(np.array(d["mean"]), np.array(d["std"]))


def timestep_embedding(t, d_temb: int, timesteps: int) -> np.ndarray:
    """Sinusoidal embedding of (batched) integer timesteps, (B, d_temb)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = d_temb // 2
    freqs = np.exp(-np.log(float(timesteps)) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


class ActionExpert:
    """Residual MLP noise predictor over flattened action chunks.

    The condition vector and timestep embedding are re-injected at every
    residual block so late blocks retain direct access to them.
    """

    def __init__(self, store: ParamStore, config: DiffusionConfig,
                 create: bool = True, seed: int = 0):
        self.store = store
        self.cfg = config
        self.betas, self.alphas, self.alpha_bars = noise_schedule(config)
        if create:
            self._create(seed)

    def _create(self, seed: int) -> None:
        cfg = self.cfg
        rng = np.random.default_rng(seed)

        def w(fan_in, fan_out):
            return rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, fan_out))

        add = self.store.add
        add("act.in.w", w(cfg.flat_dim, cfg.hidden))
        add("act.in.b", np.zeros(cfg.hidden))
        gate = cfg.hidden + cfg.d_temb + cfg.condition_dim
        for i in range(cfg.n_blocks):
            add(f"act.blk{i}.fc1.w", w(gate, cfg.hidden))
            add(f"act.blk{i}.fc1.b", np.zeros(cfg.hidden))
            add(f"act.blk{i}.fc2.w", w(cfg.hidden, cfg.hidden))
            add(f"act.blk{i}.fc2.b", np.zeros(cfg.hidden))
        add("act.out.w", np.zeros((cfg.hidden, cfg.flat_dim)))
        add("act.out.b", np.zeros(cfg.flat_dim))

    def _p(self, name: str, differentiable: bool):
        t = self.store[name]
        return t if differentiable else t.data

    def predict_clean(self, x_t, t, cond, differentiable: bool = False):
        """Predict the clean chunk underlying ``x_t`` at timestep ``t``.

        x_t: (B, flat_dim); t: (B,) ints in [1, T]; cond: (B, condition_dim).
        Clean-sample parametrization: the target is bounded at every
        noise level, so one network fits all timesteps without the gain
        blow-up a noise-prediction head needs near t = 1.
        """
        cfg = self.cfg
        temb = timestep_embedding(t, cfg.d_temb, cfg.timesteps)
        p = lambda n: self._p(n, differentiable)
        h = x_t @ p("act.in.w") + p("act.in.b")
        for i in range(cfg.n_blocks):
            gate = ops.cat([h, temb, cond], axis=-1)
            u = ops.silu(gate @ p(f"act.blk{i}.fc1.w") + p(f"act.blk{i}.fc1.b"))
            h = h + u @ p(f"act.blk{i}.fc2.w") + p(f"act.blk{i}.fc2.b")
        return h @ p("act.out.w") + p("act.out.b")

    def denoise(self, x_t, t, cond, differentiable: bool = False):
        """Implied noise estimate: invert the forward process around the
        predicted clean chunk."""
        ab = self.alpha_bars[np.asarray(t) - 1][:, None]
        x0_hat = self.predict_clean(x_t, t, cond, differentiable)
        scale = 1.0 / np.sqrt(1.0 - ab)
        return x_t * scale + x0_hat * (-np.sqrt(ab) * scale)

    def forward_noise(self, x0: np.ndarray, t: np.ndarray,
                      eps: np.ndarray) -> np.ndarray:
        """Closed-form noising of clean chunks to timestep ``t``."""
        ab = self.alpha_bars[np.asarray(t) - 1][:, None]
        return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

    def diffusion_loss(self, x0: np.ndarray, cond, rng: np.random.Generator,
                       differentiable: bool = True):
        """Clean-chunk reconstruction MSE over a batch of normalized chunks."""
        b = x0.shape[0]
        t = rng.integers(1, self.cfg.timesteps + 1, size=b)
        eps = rng.standard_normal((b, self.cfg.flat_dim))
        x_t = self.forward_noise(x0, t, eps)
        pred = self.predict_clean(x_t, t, cond, differentiable)
        if ops.is_tensor(pred):
            return mse(pred, x0)
        return float(((pred - x0) ** 2).mean())

    def sample_chunk(self, cond: np.ndarray, seed: int) -> np.ndarray:
        """Ancestral sampling: one normalized flat chunk for one condition."""
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        cond = np.asarray(cond, dtype=np.float64).reshape(1, -1)
        x = rng.standard_normal((1, cfg.flat_dim))
        for t in range(cfg.timesteps, 0, -1):
            ab = self.alpha_bars[t - 1]
            x0_hat = np.clip(self.predict_clean(x, np.array([t]), cond),
                             -cfg.clip_clean, cfg.clip_clean)
            eps_hat = (x - np.sqrt(ab) * x0_hat) / np.sqrt(1.0 - ab)
            ab_prev = self.alpha_bars[t - 2] if t > 1 else 1.0
            # deterministic (zero injected noise) reverse update: all
            # sampling randomness lives in the initial draw, which keeps
            # the chain on the model's learned manifold
            x = np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat
        return x[0]


def decode_chunk(flat: np.ndarray, normalizer: ActionNormalizer,
                 world_cfg: WorldConfig | None = None) -> ActionChunk:
    """Denormalize a sampled chunk and clip each step to actuator limits."""
    wc = world_cfg or WorldConfig()
    steps = normalizer.denormalize(np.asarray(flat)).reshape(-1, ACTION_DIM)
    limits = np.array([wc.delta_pos_max, wc.delta_pos_max,
                       wc.delta_grip_max, wc.delta_tilt_max])
    return ActionChunk.from_array(np.clip(steps, -limits, limits))


def chunks_from_demo(chunks: list[ActionChunk]) -> list[np.ndarray]:
    """Flatten demonstration chunks for normalizer fitting / training."""
    return [c.as_array().reshape(-1) for c in chunks]
