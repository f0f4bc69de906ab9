"""Two-stage training with knowledge insulation.

Stage 1 teaches the dialogue model (frozen observation encoder, trainable
sequence model). Stage 2 trains the connection module and the diffusion
expert on demonstrations while the whole dialogue stack stays frozen;
ablation variants that unfreeze parts of it are runnable from config.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import lang, scenegen, world
from .nn import AdamW, OptimConfig
from .pipeline import Pipeline


class TrainingError(RuntimeError):
    """Training diverged or was misconfigured."""


class InsulationError(TrainingError):
    """A parameter that must stay frozen changed during stage 2."""


# from-scratch training at this scale needs a far larger step size than
# fine-tuning a pretrained model would; 1e-3 converges in minutes where
# 1e-5 barely moves the loss
STAGE1_LR = 1e-3
STAGE2_LR = 1e-3

ALL_PREFIXES = ("enc.", "lm.", "con.", "act.")
COLLAB_PREFIXES = ("enc.", "lm.")

# stage-2 training variants: which parameter groups receive updates
STAGE2_VARIANTS: dict[str, tuple[str, ...]] = {
    "all": ("enc.", "lm.", "con.", "act."),
    "lm_connect_action": ("lm.", "con.", "act."),
    "connect_action": ("con.", "act."),
    "action_only": ("act.",),
}


@dataclass(frozen=True)
class TrainConfig:
    stage: int
    lr: float
    batch_size: int
    epochs: int
    seed: int = 0
    weight_decay: float = 0.01
    lr_min: float | None = None  # linear decay target; None = constant lr
    train_prefixes: tuple[str, ...] = ("lm.",)

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["train_prefixes"] = list(self.train_prefixes)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        d = json.loads(text)
        d["train_prefixes"] = tuple(d["train_prefixes"])
        return cls(**d)


def stage1_config(epochs: int = 80, seed: int = 0,
                  batch_size: int = 32, lr: float = STAGE1_LR) -> TrainConfig:
    return TrainConfig(stage=1, lr=lr, batch_size=batch_size,
                       epochs=epochs, seed=seed, train_prefixes=("lm.",))


def stage2_config(variant: str = "connect_action", epochs: int = 300,
                  seed: int = 0, batch_size: int = 32,
                  lr: float = STAGE2_LR,
                  lr_min: float | None = 1e-4) -> TrainConfig:
    if variant not in STAGE2_VARIANTS:
        raise TrainingError(f"unknown stage-2 variant: {variant}")
    # no weight decay: the denoiser must amplify small condition
    # differences into distinct trajectories, which decay fights
    return TrainConfig(stage=2, lr=lr, batch_size=batch_size, epochs=epochs,
                       seed=seed, weight_decay=0.0, lr_min=lr_min,
                       train_prefixes=STAGE2_VARIANTS[variant])


def _epoch_lr(config: TrainConfig, epoch: int) -> float:
    if config.lr_min is None or config.epochs <= 1:
        return config.lr
    frac = epoch / (config.epochs - 1)
    return config.lr + (config.lr_min - config.lr) * frac


def _apply_freeze(pipe: Pipeline, train_prefixes: tuple[str, ...]) -> None:
    for prefix in ALL_PREFIXES:
        if prefix in train_prefixes:
            pipe.store.unfreeze(prefix)
        else:
            pipe.store.freeze(prefix)


# -- stage 1 ---------------------------------------------------------------


def load_stage1_items(pipe: Pipeline, path: str | Path) -> list:
    """(token ids, supervision flags, prefix features) per training sequence."""
    items = []
    for line in Path(path).read_text().splitlines():
        _, scene, _, transcript = scenegen.parse_transcript_record(line)
        obs = world.render_observation(scene)
        prefix = pipe.collab.prefix_features(obs)
        for toks, sup in pipe.collab.sequences_from_transcript(transcript):
            ids = np.array(pipe.vocab.encode(toks))
            items.append((ids, np.array(sup, dtype=bool), prefix))
    return items


def train_stage1(pipe: Pipeline, dataset_path: str | Path,
                 config: TrainConfig | None = None,
                 eval_hook: Callable[[Pipeline, int], dict] | None = None,
                 ) -> list[dict]:
    """Train the dialogue model; the observation encoder must not move."""
    config = config or stage1_config()
    if config.stage != 1:
        raise TrainingError("stage-1 trainer given a non-stage-1 config")
    enc_before = pipe.store.subset_hash("enc.")
    _apply_freeze(pipe, config.train_prefixes)
    items = load_stage1_items(pipe, dataset_path)
    if not items:
        raise TrainingError("empty stage-1 dataset")
    opt = AdamW(pipe.store, OptimConfig(lr=config.lr,
                                        weight_decay=config.weight_decay))
    rng = np.random.default_rng(config.seed)
    logs = []
    for epoch in range(config.epochs):
        opt.config.lr = _epoch_lr(config, epoch)
        order = rng.permutation(len(items))
        total, n_batches = 0.0, 0
        for lo in range(0, len(order), config.batch_size):
            batch = [items[i] for i in order[lo:lo + config.batch_size]]
            pipe.store.zero_grad()
            loss = pipe.collab.stage1_loss(batch)
            if not math.isfinite(loss.item()):
                raise TrainingError(f"stage-1 loss diverged at epoch {epoch}")
            loss.backward()
            opt.step()
            total += loss.item()
            n_batches += 1
        entry = {"stage": 1, "epoch": epoch, "loss": total / n_batches}
        if eval_hook is not None:
            entry.update(eval_hook(pipe, epoch))
        logs.append(entry)
    if pipe.store.subset_hash("enc.") != enc_before:
        raise InsulationError("observation encoder changed during stage 1")
    return logs


# -- stage 2 ---------------------------------------------------------------


@dataclass
class DemoItem:
    instruction: tuple[str, ...]
    obs: world.Observation
    x0: np.ndarray  # normalized flat chunk, set after normalizer fitting
    raw_flat: np.ndarray = field(repr=False, default=None)


def load_stage2_items(pipe: Pipeline,
                      path: str | Path) -> tuple[list[DemoItem], "object"]:
    """Replay each demo to pair every chunk with its pre-chunk observation."""
    from .action import ActionNormalizer, chunks_from_demo

    items: list[DemoItem] = []
    for line in Path(path).read_text().splitlines():
        rec, config, reset_seed, task, chunks = \
            scenegen.parse_demo_record(line)
        instruction = tuple(rec["instruction"])
        scene = scenegen.replay_prefix(rec, world.reset(config, reset_seed))
        for chunk in chunks:
            obs = world.render_observation(scene)
            flat = chunk.as_array().reshape(-1)
            items.append(DemoItem(instruction, obs, None, flat))
            scene = world.run_chunk(scene, chunk)
    if not items:
        raise TrainingError("empty stage-2 dataset")
    normalizer = ActionNormalizer.fit([it.raw_flat for it in items])
    for it in items:
        it.x0 = normalizer.normalize(it.raw_flat)
    return items, normalizer


def _conditions(pipe: Pipeline, batch: list[DemoItem], differentiable: bool,
                normalized: bool = True):
    from .nn import ops

    conds = [pipe.condition(it.obs, it.instruction,
                            differentiable=differentiable,
                            normalized=normalized) for it in batch]
    return ops.stk(conds, axis=0) if differentiable else np.stack(conds)


def train_stage2(pipe: Pipeline, demos_path: str | Path,
                 config: TrainConfig | None = None) -> list[dict]:
    """Train connection + expert on demos; enforce insulation when frozen."""
    config = config or stage2_config()
    if config.stage != 2:
        raise TrainingError("stage-2 trainer given a non-stage-2 config")
    collab_trainable = any(p in config.train_prefixes
                           for p in COLLAB_PREFIXES)
    hashes_before = {p: pipe.store.subset_hash(p) for p in COLLAB_PREFIXES}
    _apply_freeze(pipe, config.train_prefixes)
    items, normalizer = load_stage2_items(pipe, demos_path)
    pipe.normalizer = normalizer

    # standardize instruction codes before the modulation heads: raw
    # codes for same-family instructions are near-parallel, and this
    # rescales exactly the dimensions that tell them apart; stats come
    # from the distinct training instructions and stay fixed
    from .action import VectorNormalizer
    codes: dict[tuple, np.ndarray] = {}
    for it in items:
        key = tuple(it.instruction)
        if key not in codes:
            codes[key] = np.asarray(pipe.instruction_code(it.instruction))
    pipe.embed_normalizer = VectorNormalizer.fit(
        np.stack(list(codes.values())), floor=0.02)

    # standardize conditions so the denoiser sees well-separated inputs;
    # stats come from the initial (identity-FiLM) conditions and stay fixed
    raw = _conditions(pipe, items, False, normalized=False)
    # std floor keeps near-constant feature dims from being amplified
    # into out-of-distribution spikes on unseen scenes
    pipe.cond_normalizer = VectorNormalizer.fit(raw, floor=0.02)

    # frozen dialogue stack: instruction embeddings and observation
    # features are constants and computed once; the connection module
    # still runs differentiably on those constants every step, since its
    # own parameters train in every stage-2 variant that includes them
    frozen_parts = None
    if not collab_trainable:
        frozen_parts = []
        for it in items:
            f, _ = pipe.collab.encode_observation(it.obs, False)
            e = pipe.embed_normalizer.normalize(
                np.asarray(pipe.instruction_code(it.instruction)))
            frozen_parts.append((np.asarray(e), np.asarray(f),
                                 np.asarray(it.obs.proprio,
                                            dtype=np.float64)))

    opt = AdamW(pipe.store, OptimConfig(lr=config.lr,
                                        weight_decay=config.weight_decay))
    rng = np.random.default_rng(config.seed)
    x0_all = np.stack([it.x0 for it in items])
    logs = []
    for epoch in range(config.epochs):
        opt.config.lr = _epoch_lr(config, epoch)
        order = rng.permutation(len(items))
        total, n_batches = 0.0, 0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            if frozen_parts is not None:
                from .nn import ops
                conds = [pipe.cond_normalizer.normalize(
                    pipe.connector.make_condition(e, f, p,
                                                  differentiable=True))
                    for e, f, p in (frozen_parts[i] for i in idx)]
                cond = ops.stk(conds, axis=0)
            else:
                cond = _conditions(pipe, [items[i] for i in idx], True)
            pipe.store.zero_grad()
            loss = pipe.expert.diffusion_loss(x0_all[idx], cond, rng)
            if not math.isfinite(loss.item()):
                raise TrainingError(f"stage-2 loss diverged at epoch {epoch}")
            loss.backward()
            opt.step()
            total += loss.item()
            n_batches += 1
        logs.append({"stage": 2, "epoch": epoch, "loss": total / n_batches,
                     "variant": "+".join(p.rstrip(".")
                                         for p in config.train_prefixes)})
    if not collab_trainable:
        for p in COLLAB_PREFIXES:
            if pipe.store.subset_hash(p) != hashes_before[p]:
                raise InsulationError(
                    f"frozen parameter group {p} changed during stage 2")
    return logs


# -- verification helpers --------------------------------------------------


def freeze_report(before: dict[str, np.ndarray],
                  after: Pipeline) -> dict[str, dict]:
    """Per-parameter byte comparison against a snapshot of raw arrays."""
    report = {}
    for name, arr in before.items():
        cur = after.store[name].data
        report[name] = {
            "identical": bool(np.array_equal(arr, cur)
                              and arr.tobytes() == cur.tobytes()),
            "max_delta": float(np.max(np.abs(cur - arr)))
            if arr.shape == cur.shape else float("inf"),
        }
    return report


def snapshot_params(pipe: Pipeline,
                    prefixes: tuple[str, ...] = COLLAB_PREFIXES
                    ) -> dict[str, np.ndarray]:
    return {n: pipe.store[n].data.copy() for n in pipe.store.names()
            if n.startswith(prefixes)}


PROBE_MODES = ("ambiguous", "unambiguous", "absent_target")


def probe_episodes(n: int, seed: int = 0):
    """Fixed mixed-mode episode set for dialogue probing."""
    episodes = []
    k = 0
    while len(episodes) < n:
        family = scenegen.FAMILIES[k % 3]
        mode = PROBE_MODES[(k // 3) % 3]
        if family == "stack" and mode == "absent_target":
            mode = "ambiguous"
        scene, task, _ = scenegen.sample_scene(
            family, mode, seed * 7_000_003 + scenegen.hash_mod("probe", k))
        episodes.append((scene, task, mode))
        k += 1
    return episodes


def probe_generations(pipe: Pipeline, n: int = 200,
                      seed: int = 0) -> list[tuple[str, ...]]:
    """Deterministic dialogue outputs over the probe set.

    Runs the full generate/answer/confirm loop with the truthful template
    oracle and concatenates every generated token; insulation means this
    list is identical before and after stage-2 training.
    """
    outputs = []
    for scene, task, mode in probe_episodes(n, seed):
        obs = world.render_observation(scene)
        if mode == "unambiguous":
            instruction = lang.correct_instruction(task)
        else:
            instruction = lang.ambiguous_instruction(task.family)
        history = [lang.USER, *instruction, lang.AGENT]
        collected: list[str] = []
        gen: list[str] = []
        for _ in range(scenegen.MAX_ROUNDS + 1):
            gen, _, no_signal = pipe.collab.generate(history, obs)
            collected += gen
            if no_signal or gen[-1] != lang.AMBG:
                break
            answer = lang.clarify_answer(task.family, task)
            history = history + gen + [lang.USER, *answer, lang.AGENT]
        if gen and gen[-1] == lang.NOT_AMBG and len(gen) > 1:
            confirm = [lang.USER, *gen[:-1], lang.AGENT]
            gen, _, _ = pipe.collab.generate(confirm, obs)
            collected += gen
        outputs.append(tuple(collected))
    return outputs


# -- ablation grid ---------------------------------------------------------


def run_ablation_grid(stage1_path: str | Path, demos_path: str | Path,
                      epochs: int = 500, trials_per_task: int = 10,
                      dialogue_episodes: int = 100, seed: int = 0,
                      variants: tuple[str, ...] | None = None,
                      dialogue_gate: float = 0.95,
                      success_gate: float = 0.80) -> dict:
    """Train every stage-2 variant from one stage-1 checkpoint and gate it.

    Each variant restarts from the same dialogue-trained checkpoint,
    trains on the same demos, and is scored on both axes: clarification
    resolution accuracy on ambiguous dialogues and family-averaged task
    success with the truthful oracle.
    """
    from .evalsuite import eval_dialogue, eval_success

    grid = {}
    for variant in (variants or tuple(STAGE2_VARIANTS)):
        pipe, _ = Pipeline.load(stage1_path)
        cfg = stage2_config(variant=variant, epochs=epochs, seed=seed)
        train_stage2(pipe, demos_path, cfg)
        dia = eval_dialogue(pipe, n_episodes=dialogue_episodes, seed=seed + 1)
        suc = eval_success(pipe, trials_per_task=trials_per_task,
                           seed=seed + 2)
        dialogue_score = dia["resolution_accuracy"]
        success_score = float(np.mean(list(
            suc["family_averages"].values())))
        grid[variant] = {
            "dialogue": dia,
            "dialogue_score": dialogue_score,
            "success": suc["family_averages"],
            "success_score": success_score,
            "passes": bool(dialogue_score >= dialogue_gate
                           and success_score >= success_gate),
        }
    return {"seed": seed, "epochs": epochs,
            "dialogue_gate": dialogue_gate, "success_gate": success_gate,
            "variants": grid}
