"""Collaboration component: frozen observation encoder + tiny causal LM.

The encoder is frozen: each spatial region's tanh-squashed channel sums
occupy that region's own slice of the feature vector, so the layout stays
linearly readable after pooling; the LM is a 2-layer single-head
causal transformer over the closed vocabulary, consuming the encoder
features as prefix embeddings. The LM is trained in stage 1 only and
frozen afterwards (knowledge insulation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lang
from .lang import AGENT, USER, Vocab
from .nn import ParamStore, Tensor, softmax_cross_entropy
from .nn import ops
from .scenegen import Transcript
from .world import Observation


class ContextOverflowError(RuntimeError):
    pass


@dataclass(frozen=True)
class CollabConfig:
    # one lane slice per region plus one global-summary slice, one lane
    # per raster channel or conjunction: d_feat = (n_regions + 1) * n_lanes
    # keeps per-region occupancy and whole-scene presence linearly readable
    d_feat: int = 442
    d_model: int = 64
    n_layers: int = 2
    d_ff: int = 128
    context: int = 128
    region_grid: int = 4
    n_channels: int = 14
    grid: int = 16
    feat_scale: float = 0.5
    max_gen: int = 16

    @property
    def n_regions(self) -> int:
        return self.region_grid**2

    @property
    def n_prefix(self) -> int:
        return self.n_regions + 1  # pooled token + one token per region

    @property
    def n_lanes(self) -> int:
        # raster channels plus cup-color and block-color conjunctions
        from .world import COLORS
        return self.n_channels + 2 * len(COLORS)

    @property
    def channels_per_region(self) -> int:
        if self.d_feat % (self.n_regions + 1):
            raise ValueError("d_feat must be (n_regions + 1) * n_lanes")
        return self.d_feat // (self.n_regions + 1)


class CollabModel:
    """Owns the ``enc.*`` (frozen) and ``lm.*`` parameter groups."""

    def __init__(self, store: ParamStore, vocab: Vocab, config: CollabConfig,
                 seed: int, create: bool = True):
        self.store = store
        self.vocab = vocab
        self.cfg = config
        if create:
            self._create(seed)

    def _create(self, seed: int) -> None:
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        c, d, dm, v = cfg.n_lanes, cfg.d_feat, cfg.d_model, len(self.vocab)
        add = self.store.add
        # frozen encoder: each region's k-lane code lands in that region's
        # own channel slice of the feature vector, so spatial layout
        # survives mean pooling. With k == n_lanes the code is the
        # identity map of the region's lane sums, which keeps object
        # occupancy per region linearly decodable downstream; otherwise it
        # falls back to a random projection
        k = cfg.channels_per_region
        w = np.eye(c) if k == c else rng.normal(0, 1 / np.sqrt(c), (c, k))
        add("enc.w", w, frozen=True)
        add("enc.b", np.zeros(k), frozen=True)
        # global-summary code: identity over whole-scene lane totals,
        # written into the dedicated trailing slice of the feature vector
        add("enc.pool.w", np.eye(c) if k == c
            else rng.normal(0, 1 / np.sqrt(c), (c, k)), frozen=True)
        add("enc.pool.b", np.zeros(k), frozen=True)
        # trainable LM
        add("lm.tok", rng.normal(0, 0.02, (v, dm)))
        add("lm.pos", rng.normal(0, 0.02, (cfg.context, dm)))
        add("lm.obsproj.w", rng.normal(0, 1 / np.sqrt(d), (d, dm)))
        add("lm.obsproj.b", np.zeros(dm))
        for i in range(cfg.n_layers):
            p = f"lm.blk{i}"
            for nm in ("q", "k", "v", "o"):
                add(f"{p}.attn.{nm}.w", rng.normal(0, 1 / np.sqrt(dm), (dm, dm)))
                add(f"{p}.attn.{nm}.b", np.zeros(dm))
            add(f"{p}.ln1.g", np.ones(dm))
            add(f"{p}.ln1.b", np.zeros(dm))
            add(f"{p}.ln2.g", np.ones(dm))
            add(f"{p}.ln2.b", np.zeros(dm))
            add(f"{p}.fc1.w", rng.normal(0, 1 / np.sqrt(dm), (dm, cfg.d_ff)))
            add(f"{p}.fc1.b", np.zeros(cfg.d_ff))
            add(f"{p}.fc2.w", rng.normal(0, 1 / np.sqrt(cfg.d_ff), (cfg.d_ff, dm)))
            add(f"{p}.fc2.b", np.zeros(dm))
        add("lm.lnf.g", np.ones(dm))
        add("lm.lnf.b", np.zeros(dm))
        add("lm.head.w", rng.normal(0, 1 / np.sqrt(dm), (dm, v)))
        add("lm.head.b", np.zeros(v))

    # -- observation encoder ----------------------------------------------

    def _p(self, name: str, differentiable: bool):
        t = self.store[name]
        return t if differentiable else t.data

    def region_sums(self, raster: np.ndarray) -> np.ndarray:
        g, rg = self.cfg.grid, self.cfg.region_grid
        cell = g // rg
        s = raster.reshape(rg, cell, rg, cell, self.cfg.n_channels).sum(axis=(1, 3))
        return s.reshape(self.cfg.n_regions, self.cfg.n_channels)

    def region_lanes(self, raster: np.ndarray) -> np.ndarray:
        """Per-region channel sums plus category-times-color conjunction
        lanes for the color-qualified categories (cups and blocks).

        The grammar refers to cups and blocks by color, so "the white cup"
        must be a single lane: the white color total alone is useless (the
        plate is white too), and a region holds at most one object, so the
        per-region product is an exact conjunction.
        """
        from . import world
        s = self.region_sums(raster)
        parts = [s]
        for cat in ("cup", "block"):
            plane = s[:, world.CATEGORY_PLANES.index(cat):][:, :1]
            colors = s[:, world.COLOR_BASE:world.COLOR_BASE + len(world.COLORS)]
            parts.append(plane * colors)
        return np.concatenate(parts, axis=1)

    def encode_observation(self, obs: Observation, differentiable: bool = False):
        """Frozen features: per-region map F (R, d_feat) and a pooled vector."""
        ext = self.region_lanes(obs.raster)  # (R, L), plain data
        total = ext.sum(axis=0)
        w = self._p("enc.w", differentiable)
        b = self._p("enc.b", differentiable)
        pw = self._p("enc.pool.w", differentiable)
        pb = self._p("enc.pool.b", differentiable)
        if differentiable:
            ext, total = Tensor(ext), Tensor(total)
        r, k = self.cfg.n_regions, self.cfg.channels_per_region
        core = ops.tanh((ext @ w + b) * self.cfg.feat_scale)  # (R, k)
        # scatter each region's code into its own channel slice: row r is
        # nonzero only in columns [r*k, (r+1)*k); the trailing global
        # slice stays zero in the spatial map
        eye = np.eye(r)
        spatial = (core.reshape(r, 1, k) * eye.reshape(r, r, 1)).reshape(r, r * k)
        f = ops.cat([spatial, np.zeros((r, k))], axis=1)
        # pooled vector: whole-scene lane totals in the global slice, so
        # presence of any referable thing is a single coordinate (totals
        # of the conjunction lanes, not conjunctions of totals)
        code = ops.tanh((total @ pw + pb) * self.cfg.feat_scale)
        pooled = ops.cat([np.zeros(r * k),
                          code if ops.is_tensor(code) else np.asarray(code)],
                         axis=0)
        return f, pooled

    def prefix_features(self, obs: Observation, differentiable: bool = False):
        """(n_prefix, d_feat) block fed to the LM ahead of the text tokens."""
        f, pooled = self.encode_observation(obs, differentiable)
        return ops.cat([
            pooled.reshape(1, -1) if ops.is_tensor(pooled) else pooled[None, :],
            f,
        ], axis=0)

    # -- LM forward --------------------------------------------------------

    def lm_forward(self, tokens: np.ndarray, prefix, differentiable: bool = False):
        """Causal forward over [prefix ; tokens].

        tokens: (T,) or (B, T) int ids; prefix: (n_prefix, d_feat) or
        (B, n_prefix, d_feat). Returns (logits, hiddens) covering the full
        length P+T; text logits start at index P-1 shifted by one.
        """
        cfg = self.cfg
        tokens = np.asarray(tokens)
        squeeze = tokens.ndim == 1
        if squeeze:
            tokens = tokens[None, :]
            if ops.value(prefix).ndim == 2:
                prefix = (prefix.reshape(1, cfg.n_prefix, cfg.d_feat)
                          if ops.is_tensor(prefix) else prefix[None])
        b, t_len = tokens.shape
        total = cfg.n_prefix + t_len
        if total > cfg.context:
            raise ContextOverflowError(f"sequence length {total} > {cfg.context}")
        p = lambda n: self._p(n, differentiable)

        obs_emb = prefix @ p("lm.obsproj.w") + p("lm.obsproj.b")
        tok_emb = ops.embed(p("lm.tok"), tokens)
        x = ops.cat([obs_emb, tok_emb], axis=1)
        x = x + ops.embed(p("lm.pos"), np.arange(total))
        scale = 1.0 / np.sqrt(cfg.d_model)
        for i in range(cfg.n_layers):
            pre = f"lm.blk{i}"
            h = ops.layernorm(x, p(f"{pre}.ln1.g"), p(f"{pre}.ln1.b"))
            q = h @ p(f"{pre}.attn.q.w") + p(f"{pre}.attn.q.b")
            k = h @ p(f"{pre}.attn.k.w") + p(f"{pre}.attn.k.b")
            v = h @ p(f"{pre}.attn.v.w") + p(f"{pre}.attn.v.b")
            att = ops.causal_softmax((q @ ops.swap_last(k)) * scale, total)
            x = x + (att @ v) @ p(f"{pre}.attn.o.w") + p(f"{pre}.attn.o.b")
            h = ops.layernorm(x, p(f"{pre}.ln2.g"), p(f"{pre}.ln2.b"))
            x = x + ops.silu(h @ p(f"{pre}.fc1.w") + p(f"{pre}.fc1.b")) \
                @ p(f"{pre}.fc2.w") + p(f"{pre}.fc2.b")
        hiddens = ops.layernorm(x, p("lm.lnf.g"), p("lm.lnf.b"))
        logits = hiddens @ p("lm.head.w") + p("lm.head.b")
        if squeeze:
            logits = logits[0] if ops.is_tensor(logits) else logits[0]
            hiddens = hiddens[0] if ops.is_tensor(hiddens) else hiddens[0]
        return logits, hiddens

    # -- generation --------------------------------------------------------

    def generate(self, history: list[str], obs: Observation,
                 max_len: int | None = None):
        """Greedy continuation until the first signal token.

        Returns (generated tokens, hidden-at-signal or None, no_signal flag).
        """
        cfg = self.cfg
        max_len = max_len or cfg.max_gen
        prefix = self.prefix_features(obs)
        ids = list(self.vocab.encode(history))
        generated: list[str] = []
        for _ in range(max_len):
            logits, hiddens = self.lm_forward(np.array(ids), prefix)
            nxt = int(np.argmax(logits[-1]))
            tok = self.vocab.tokens[nxt]
            ids.append(nxt)
            generated.append(tok)
            if tok in lang.SIGNALS:
                _, hiddens = self.lm_forward(np.array(ids), prefix)
                return generated, hiddens[-1], False
        return generated, None, True

    def instruction_embedding(self, instruction: tuple[str, ...],
                              obs_or_prefix, signal: str = lang.ACT,
                              differentiable: bool = False):
        """Hidden state at the signal position of a confirmed instruction."""
        toks = [USER, *instruction, AGENT, signal]
        ids = np.array(self.vocab.encode(toks))
        prefix = (self.prefix_features(obs_or_prefix, differentiable)
                  if isinstance(obs_or_prefix, Observation) else obs_or_prefix)
        _, hiddens = self.lm_forward(ids, prefix, differentiable)
        return hiddens[-1]

    # -- training sequences ------------------------------------------------

    def sequences_from_transcript(self, t: Transcript):
        """(tokens, supervised) pairs: the dialogue pass and the confirm pass.

        Supervision covers agent tokens including the trailing signal; user
        and prompt tokens are masked out.
        """
        seqs = []
        if t.initial_instruction.ambiguous:
            toks, sup = [USER, *t.initial_instruction.text, AGENT], None
            sup = [False] * len(toks)
            for turn in t.turns:
                if turn.signal in (lang.ACT, lang.REJ) and t.resolved_instruction:
                    break  # confirm pass is a separate sequence
                if turn.speaker == "agent":
                    toks += list(turn.text)
                    sup += [True] * len(turn.text)
                    if turn.signal == lang.AMBG:
                        toks += [USER]
                        sup += [False]
                else:
                    toks += [*turn.text, AGENT]
                    sup += [False] * (len(turn.text) + 1)
            seqs.append((toks, sup))
            confirm_input = t.resolved_instruction.text
        else:
            confirm_input = t.initial_instruction.text
        toks = [USER, *confirm_input, AGENT, t.terminal_signal]
        sup = [False] * (len(toks) - 1) + [True]
        seqs.append((toks, sup))
        return seqs

    def stage1_loss(self, batch, differentiable: bool = True):
        """Masked next-token cross entropy over a padded batch.

        ``batch``: list of (token_ids, supervised_flags, prefix_feats).
        """
        cfg = self.cfg
        b = len(batch)
        t_len = max(len(ids) for ids, _, _ in batch)
        pad_id = self.vocab.index[lang.PAD]
        toks = np.full((b, t_len), pad_id, dtype=np.int64)
        sup = np.zeros((b, t_len))
        prefixes = []
        for i, (ids, flags, pf) in enumerate(batch):
            toks[i, :len(ids)] = ids
            sup[i, :len(flags)] = flags
            prefixes.append(pf)
        prefix = (ops.stk(prefixes, axis=0) if ops.is_tensor(prefixes[0])
                  else np.stack(prefixes))
        logits, _ = self.lm_forward(toks, prefix, differentiable)
        # position P-1+j predicts text token j+... : align predictions with
        # targets by dropping the last step and the prefix body
        start = cfg.n_prefix - 1
        pred = logits[:, start:start + t_len - 1 + 1, :]
        # predictions at prefix-end predict token 0; at text j predict j+1
        targets = toks
        mask = sup
        if ops.is_tensor(pred):
            return softmax_cross_entropy(pred, targets, mask)
        shifted = pred - pred.max(axis=-1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
        denom = max(mask.sum(), 1.0)
        return float(-(picked * mask).sum() / denom)
