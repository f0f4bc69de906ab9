"""Bundled model pipeline: dialogue model, connection module, action expert.

One parameter store backs all three components, so freezing, hashing and
checkpointing operate uniformly by name prefix (``enc.``, ``lm.``,
``con.``, ``act.``).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .action import (ActionExpert, ActionNormalizer, DiffusionConfig,
                     VectorNormalizer)
from .collab import CollabConfig, CollabModel
from .connect import ConnectConfig, Connector
from .lang import Vocab
from .nn import ParamStore, load_checkpoint, save_checkpoint

COMPONENT_PREFIXES = ("enc.", "lm.", "con.", "act.")
COLLAB_PREFIXES = ("enc.", "lm.")


@dataclass
class Pipeline:
    store: ParamStore
    vocab: Vocab
    collab: CollabModel
    connector: Connector
    expert: ActionExpert
    normalizer: ActionNormalizer | None = None
    cond_normalizer: VectorNormalizer | None = None
    # standardizes instruction codes before the modulation heads; fit on
    # the training instructions, it rescales exactly the dimensions that
    # distinguish same-family instructions (raw codes are near-parallel)
    embed_normalizer: VectorNormalizer | None = None

    @classmethod
    def create(cls, seed: int = 0,
               collab_cfg: CollabConfig | None = None,
               connect_cfg: ConnectConfig | None = None,
               diffusion_cfg: DiffusionConfig | None = None) -> "Pipeline":
        store = ParamStore()
        vocab = Vocab()
        collab = CollabModel(store, vocab, collab_cfg or CollabConfig(),
                             seed=seed)
        connector = Connector(store, connect_cfg or ConnectConfig())
        expert = ActionExpert(store, diffusion_cfg or DiffusionConfig(),
                              seed=seed + 1)
        return cls(store, vocab, collab, connector, expert)

    def blank_observation(self):
        """Canonical empty observation used to read out instruction codes."""
        from .world import Observation, N_CHANNELS
        cfg = self.collab.cfg
        import numpy as np
        return Observation(raster=np.zeros((cfg.grid, cfg.grid, N_CHANNELS)),
                           proprio=np.zeros(4))

    def instruction_code(self, instruction, differentiable: bool = False):
        """Dialogue-model hidden state for an instruction on the blank scene.

        Evaluating the frozen model on a canonical empty observation makes
        the code a pure function of the instruction text, so the
        modulation it drives selects the same channels on every scene.
        """
        return self.collab.instruction_embedding(
            instruction, self.blank_observation(),
            differentiable=differentiable)

    def condition(self, obs, instruction, modulation: bool = True,
                  differentiable: bool = False, normalized: bool = True):
        """Denoiser condition for one observation/instruction pair."""
        f, _ = self.collab.encode_observation(obs, differentiable)
        e = self.instruction_code(instruction, differentiable=differentiable)
        if self.embed_normalizer is not None:
            e = self.embed_normalizer.normalize(e)
        c = self.connector.make_condition(e, f, obs.proprio,
                                          differentiable=differentiable,
                                          modulation=modulation)
        if normalized and self.cond_normalizer is not None:
            c = self.cond_normalizer.normalize(c)
        return c

    def component_hashes(self) -> dict[str, str]:
        return {p.rstrip("."): self.store.subset_hash(p)
                for p in COMPONENT_PREFIXES}

    def save(self, path: str | Path, extra_meta: dict | None = None) -> None:
        meta = {
            "vocab": list(self.vocab.tokens),
            "vocab_hash": self.vocab.content_hash(),
            "normalizer": (self.normalizer.to_json()
                           if self.normalizer else None),
            "cond_normalizer": (self.cond_normalizer.to_json()
                                if self.cond_normalizer else None),
            "embed_normalizer": (self.embed_normalizer.to_json()
                                 if self.embed_normalizer else None),
            "collab_cfg": dataclasses.asdict(self.collab.cfg),
            "connect_cfg": dataclasses.asdict(self.connector.cfg),
            "diffusion_cfg": dataclasses.asdict(self.expert.cfg),
            "component_hashes": self.component_hashes(),
        }
        meta.update(extra_meta or {})
        save_checkpoint(path, {"model": self.store}, meta)

    @classmethod
    def load(cls, path: str | Path) -> tuple["Pipeline", dict]:
        stores, meta = load_checkpoint(path)
        store = stores["model"]
        vocab = Vocab(tuple(meta["vocab"]))
        collab = CollabModel(store, vocab, CollabConfig(**meta["collab_cfg"]),
                             seed=0, create=False)
        connector = Connector(store, ConnectConfig(**meta["connect_cfg"]),
                              create=False)
        expert = ActionExpert(store, DiffusionConfig(**meta["diffusion_cfg"]),
                              create=False)
        norm = (ActionNormalizer.from_json(meta["normalizer"])
                if meta.get("normalizer") else None)
        cnorm = (VectorNormalizer.from_json(meta["cond_normalizer"])
                 if meta.get("cond_normalizer") else None)
        enorm = (VectorNormalizer.from_json(meta["embed_normalizer"])
                 if meta.get("embed_normalizer") else None)
        return cls(store, vocab, collab, connector, expert,
                   norm, cnorm, enorm), meta
