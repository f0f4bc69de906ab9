"""Ambiguous-scene synthesis, templated dialogues, and dataset files.

Replaces LLM-generated dialogue data with deterministic templates over the
closed vocabulary; every record is re-derivable from (mode, family, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import lang, world
from .lang import ACT, AMBG, NOT_AMBG, REJ
from .world import (
    PLATE_POS,
    ObjectTemplate,
    SceneConfig,
    SceneState,
    TaskSpec,
)

FAMILIES = ("place", "pour", "stack")
MODES = ("ambiguous", "unambiguous", "absent_target")
MAX_ROUNDS = 5

PLACE_FRUITS = ("apple", "peach", "orange")


class NotAmbiguousError(ValueError):
    """Scene has a unique candidate; no ambiguous instruction exists."""


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class Instruction:
    text: tuple[str, ...]
    ambiguous: bool
    descriptor: frozenset[str]


@dataclass(frozen=True)
class DialogueTurn:
    speaker: str  # agent | user
    text: tuple[str, ...]
    signal: str | None = None


@dataclass(frozen=True)
class Transcript:
    initial_instruction: Instruction
    turns: tuple[DialogueTurn, ...]
    resolved_instruction: Instruction | None
    terminal_signal: str


# -- scene sampling --------------------------------------------------------


def _scene_config(family: str, mode: str, rng: np.random.Generator,
                  brightness: float = 1.0,
                  distractor: bool = False) -> tuple[SceneConfig, TaskSpec]:
    objects = [ObjectTemplate("plate", "white", position=PLATE_POS)]
    if family == "place":
        if mode == "absent_target":
            present = list(rng.permutation(PLACE_FRUITS))
            target = present.pop(0)
        else:
            n = 1 if mode == "unambiguous" else int(rng.integers(2, 4))
            present = list(rng.permutation(PLACE_FRUITS)[:n])
            target = str(rng.choice(present))
        for cat in present:
            objects.append(ObjectTemplate(cat, lang.FRUIT_COLOR[cat]))
        if distractor:
            objects.append(ObjectTemplate("pomegranate", "red"))
        task = TaskSpec("place", frozenset({target}), frozenset({"plate"}))
    elif family == "pour":
        if mode == "absent_target":
            present = list(rng.permutation(lang.CUP_COLORS))
            target = present.pop(0)
        else:
            n = 1 if mode == "unambiguous" else int(rng.integers(2, 4))
            present = list(rng.permutation(lang.CUP_COLORS)[:n])
            target = str(rng.choice(present))
        for color in present:
            objects.append(ObjectTemplate("cup", color, water=True))
        task = TaskSpec("pour", frozenset({"cup", target}), frozenset({"plate"}))
    elif family == "stack":
        if mode == "absent_target":
            raise ValueError("stack family has no absent_target mode")
        top = str(rng.choice(lang.STACK_COLORS))
        base = [c for c in lang.STACK_COLORS if c != top][0]
        for color in lang.STACK_COLORS:
            objects.append(ObjectTemplate("block", color))
        task = TaskSpec("stack", frozenset({"block", top}),
                        frozenset({"block", base}))
    else:
        raise ValueError(family)
    return SceneConfig(objects=objects, brightness=brightness), task


def sample_scene(family: str, mode: str, seed: int, brightness: float = 1.0,
                 distractor: bool = False
                 ) -> tuple[SceneState, TaskSpec, str]:
    """Sample a scene and task; returns the asked-about attribute slot too."""
    rng = np.random.default_rng(seed)
    config, task = _scene_config(family, mode, rng, brightness, distractor)
    scene = world.reset(config, seed=int(rng.integers(2**31)))
    attribute = "kind" if family == "place" else "color"
    return scene, task, attribute


def sample_scene_config(family: str, mode: str, seed: int,
                        brightness: float = 1.0, distractor: bool = False
                        ) -> tuple[SceneConfig, int, TaskSpec]:
    """Like sample_scene but exposes (config, reset seed) for replay files."""
    rng = np.random.default_rng(seed)
    config, task = _scene_config(family, mode, rng, brightness, distractor)
    return config, int(rng.integers(2**31)), task


# -- instructions and dialogue --------------------------------------------


def make_ambiguous_instruction(task: TaskSpec, scene: SceneState) -> Instruction:
    text = lang.ambiguous_instruction(task.family)
    parsed = lang.parse_instruction(text)
    candidates = [o for o in scene.objects if world.matches(o, parsed.target)]
    if len(candidates) < 2:
        raise NotAmbiguousError(
            f"{task.family} scene has {len(candidates)} candidate(s)"
        )
    return Instruction(text=text, ambiguous=True, descriptor=parsed.target)


def make_correct_instruction(task: TaskSpec) -> Instruction:
    return Instruction(text=lang.correct_instruction(task), ambiguous=False,
                       descriptor=task.target_descriptor)


def target_present(scene: SceneState, task: TaskSpec) -> bool:
    return any(world.matches(o, task.target_descriptor) for o in scene.objects)


def synthesize_dialogue(scene: SceneState, task: TaskSpec,
                        mode: str) -> Transcript:
    """Templated transcript for a scene: question, truthful answer, outcome."""
    correct = make_correct_instruction(task)
    present = target_present(scene, task)
    if mode == "unambiguous":
        turns = (DialogueTurn("agent", (ACT,), ACT),)
        return Transcript(correct, turns, None, ACT)
    initial = make_ambiguous_instruction(task, scene)
    verdict = ACT if present else REJ
    turns = (
        DialogueTurn("agent", lang.clarify_question(task.family) + (AMBG,), AMBG),
        DialogueTurn("user", lang.clarify_answer(task.family, task)),
        DialogueTurn("agent", correct.text + (NOT_AMBG,), NOT_AMBG),
        DialogueTurn("agent", (verdict,), verdict),
    )
    return Transcript(initial, turns, correct, verdict)


# -- validation ------------------------------------------------------------


def validate_transcript(t: Transcript, scene: SceneState,
                        task: TaskSpec) -> list[str]:
    """Machine check of the transcript invariants; returns problems found."""
    problems = []
    rounds = sum(1 for turn in t.turns if turn.signal == AMBG)
    if rounds > MAX_ROUNDS:
        problems.append(f"{rounds} rounds exceeds max {MAX_ROUNDS}")
    for turn in t.turns:
        if turn.speaker == "agent":
            n_sig = sum(1 for tok in turn.text if tok in lang.SIGNALS)
            if n_sig != 1 or turn.text[-1] not in lang.SIGNALS:
                problems.append(f"agent turn lacks single trailing signal: {turn.text}")
            if turn.signal != turn.text[-1]:
                problems.append("signal field disagrees with trailing token")
        elif turn.signal is not None:
            problems.append("user turn carries a signal")
    if t.terminal_signal in (ACT, REJ):
        if t.resolved_instruction is None and t.initial_instruction.ambiguous:
            problems.append("terminal ACT/REJ without resolution")
    # truthfulness: re-derive the user answer from ground truth
    expected = lang.clarify_answer(task.family, task)
    for turn in t.turns:
        if turn.speaker == "user" and turn.text != expected:
            problems.append(f"untruthful answer {turn.text} != {expected}")
    # verdict must match ground-truth presence
    want = ACT if target_present(scene, task) else REJ
    if t.terminal_signal != want:
        problems.append(f"terminal {t.terminal_signal}, ground truth {want}")
    return problems


# -- dataset files ---------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def transcript_record(family: str, mode: str, seed: int, scene: SceneState,
                      task: TaskSpec, t: Transcript) -> str:
    return _dumps({
        "kind": "dialogue", "family": family, "mode": mode, "seed": seed,
        "scene": world.scene_to_lines(scene),
        "task": {"family": task.family,
                 "target": sorted(task.target_descriptor),
                 "dest": sorted(task.destination_descriptor)},
        "initial": list(t.initial_instruction.text),
        "turns": [{"speaker": turn.speaker, "text": list(turn.text),
                   "signal": turn.signal} for turn in t.turns],
        "resolved": list(t.resolved_instruction.text)
        if t.resolved_instruction else None,
        "terminal": t.terminal_signal,
    })


def parse_transcript_record(line: str):
    rec = json.loads(line)
    scene = world.scene_from_lines(rec["scene"])
    task = TaskSpec(rec["task"]["family"],
                    frozenset(rec["task"]["target"]),
                    frozenset(rec["task"]["dest"]))
    turns = tuple(DialogueTurn(t["speaker"], tuple(t["text"]), t["signal"])
                  for t in rec["turns"])
    initial_parsed = lang.parse_instruction(tuple(rec["initial"]))
    initial = Instruction(tuple(rec["initial"]), initial_parsed.ambiguous,
                          initial_parsed.target)
    resolved = None
    if rec["resolved"]:
        rp = lang.parse_instruction(tuple(rec["resolved"]))
        resolved = Instruction(tuple(rec["resolved"]), False, rp.target)
    t = Transcript(initial, turns, resolved, rec["terminal"])
    return rec, scene, task, t


def demo_record(family: str, seed: int, config: SceneConfig, reset_seed: int,
                task: TaskSpec, chunks: list[world.ActionChunk],
                prefix: list[world.ActionStep] | None = None) -> str:
    """One demonstration line.

    ``prefix`` is an optional list of replay-only steps: they advance the
    scene into a mid-task state before the first trained chunk, but are
    not themselves training targets. This is how recovery behavior (e.g.
    finishing a delivery while already holding the object) enters the
    dataset.
    """
    rec = {
        "kind": "demo", "family": family, "seed": seed,
        "reset_seed": reset_seed,
        "config": json.loads(world.config_to_json(config)),
        "task": {"family": task.family,
                 "target": sorted(task.target_descriptor),
                 "dest": sorted(task.destination_descriptor)},
        "instruction": list(lang.correct_instruction(task)),
        "chunks": [[[round(v, 9) for v in step] for step in c.as_array().tolist()]
                   for c in chunks],
    }
    if prefix:
        rec["prefix"] = [[round(v, 9) for v in (s.dx, s.dy, s.d_gripper,
                                                s.d_tilt)] for s in prefix]
    return _dumps(rec)


def replay_prefix(rec: dict, scene: world.SceneState) -> world.SceneState:
    """Advance a freshly reset scene through the record's replay-only steps."""
    for vals in rec.get("prefix", ()):
        scene = world.step(scene, world.ActionStep(*vals))
    return scene


def parse_demo_record(line: str):
    rec = json.loads(line)
    config = world.config_from_json(_dumps(rec["config"]))
    task = TaskSpec(rec["task"]["family"],
                    frozenset(rec["task"]["target"]),
                    frozenset(rec["task"]["dest"]))
    chunks = [world.ActionChunk.from_array(np.asarray(c)) for c in rec["chunks"]]
    return rec, config, rec["reset_seed"], task, chunks


def build_stage1(path: str | Path, counts: dict[str, int], seed: int) -> int:
    """Write the dialogue dataset: ``counts`` maps mode -> records per family."""
    n = 0
    lines = []
    for mode in MODES:
        per_family = counts.get(mode, 0)
        for family in FAMILIES:
            if family == "stack" and mode == "absent_target":
                continue
            for k in range(per_family):
                rec_seed = seed * 1_000_003 + hash_mod(family, mode, k)
                scene, task, _ = sample_scene(family, mode, rec_seed)
                t = synthesize_dialogue(scene, task, mode)
                problems = validate_transcript(t, scene, task)
                if problems:
                    raise DatasetError(f"invalid transcript: {problems}")
                lines.append(transcript_record(family, mode, rec_seed, scene, task, t))
                n += 1
    Path(path).write_text("\n".join(lines) + "\n")
    return n


def scene_task_instances(family: str, scene: SceneState
                         ) -> list[tuple[str, TaskSpec]]:
    """Every concrete task of ``family`` realizable in one scene.

    Candidates that appear more than once are skipped (their descriptor
    would be ambiguous). Returned sorted by variant for determinism.
    """
    found: dict[str, TaskSpec] = {}
    if family == "place":
        cats = [o.category for o in scene.objects]
        for o in scene.objects:
            if o.category in PLACE_FRUITS and cats.count(o.category) == 1:
                found[o.category] = TaskSpec(
                    "place", frozenset({o.category}), frozenset({"plate"}))
    elif family == "pour":
        colors = [o.color for o in scene.objects if o.category == "cup"]
        for o in scene.objects:
            if o.category == "cup" and o.water \
                    and colors.count(o.color) == 1:
                found[o.color] = TaskSpec(
                    "pour", frozenset({"cup", o.color}), frozenset({"plate"}))
    else:
        colors = [o.color for o in scene.objects if o.category == "block"]
        for v in colors:
            others = [c for c in colors if c != v]
            if len(others) == 1:
                found[v] = TaskSpec("stack", frozenset({"block", v}),
                                    frozenset({"block", others[0]}))
    return sorted(found.items())


def build_stage2(path: str | Path, demos_per_task: int, seed: int) -> int:
    """Write the demonstration dataset from the scripted expert.

    Tasks are the 8 concrete task instances (3 place, 3 pour, 2 stack).
    Every sampled scene yields one demo per realizable concrete task, so
    the expert trains on contrastive pairs: identical observations whose
    correct chunk differs only through the instruction. Each full demo
    is paired with a resume demo: replay-only prefix steps carry the
    scene past the grasp, and the trained chunk completes the delivery —
    teaching recovery from mid-task (object-in-hand) observations.
    """
    lines = []
    n = 0
    for family in FAMILIES:
        variants = (PLACE_FRUITS if family == "place"
                    else lang.CUP_COLORS if family == "pour"
                    else lang.STACK_COLORS)
        for variant in variants:
            for k in range(demos_per_task):
                rec_seed = seed * 2_000_003 + hash_mod(family, variant, k)
                config, reset_seed, _ = _demo_scene(family, variant, rec_seed)
                scene = world.reset(config, reset_seed)
                for _, inst_task in scene_task_instances(family, scene):
                    chunks = world.scripted_expert(scene, inst_task)
                    lines.append(demo_record(family, rec_seed, config,
                                             reset_seed, inst_task, chunks))
                    n += 1
                    resume = resume_demo(family, rec_seed, config,
                                         reset_seed, inst_task)
                    if resume is not None:
                        lines.append(resume)
                        n += 1
    Path(path).write_text("\n".join(lines) + "\n")
    return n


def resume_demo(family: str, rec_seed: int, config: SceneConfig,
                reset_seed: int, task: TaskSpec) -> str | None:
    """Demo that starts mid-task, a few steps after the grasp.

    The prefix replays the expert up to ``held + extra`` steps; the
    trained chunk is the expert's completion from there. Returns None
    when the expert finishes before the target is ever held.
    """
    scene = world.reset(config, reset_seed)
    prefix: list[world.ActionStep] = []
    held_at = None
    for i in range(world.CHUNK_LEN):
        if world.success(scene, task):
            break
        a = world.expert_step(scene, task)
        scene_next = world.step(scene, a)
        if held_at is None:
            held = scene_next.held_object()
            if held is not None and world.matches(held,
                                                  task.target_descriptor):
                held_at = i
        # vary the cut point so mid-carry states are diverse
        extra = hash_mod(rec_seed, "resume") % 12 + 2
        if held_at is not None and i - held_at >= extra:
            prefix.append(a)
            scene = scene_next
            break
        prefix.append(a)
        scene = scene_next
    if held_at is None or world.success(scene, task):
        return None
    chunks = world.scripted_expert(scene, task)
    return demo_record(family, rec_seed, config, reset_seed, task,
                       chunks, prefix=prefix)


def task_variants(family: str) -> tuple[str, ...]:
    """Concrete task instances per family (8 tasks total)."""
    return (PLACE_FRUITS if family == "place"
            else lang.CUP_COLORS if family == "pour"
            else lang.STACK_COLORS)


def task_scene_config(family: str, variant: str, seed: int,
                      brightness: float = 1.0, distractor: bool = False):
    """Ambiguous-style scene but with a fixed concrete target.

    Returns (config, reset_seed, task); the target named by ``variant``
    (a fruit kind, cup color, or block color) is guaranteed present.
    """
    rng = np.random.default_rng(seed)
    config, task = _scene_config(family, "ambiguous", rng, brightness,
                                 distractor)
    if family == "place":
        present = {t.category for t in config.objects}
        if variant not in present:
            config.objects.append(ObjectTemplate(variant, lang.FRUIT_COLOR[variant]))
        task = TaskSpec("place", frozenset({variant}), frozenset({"plate"}))
    elif family == "pour":
        present = {t.color for t in config.objects if t.category == "cup"}
        if variant not in present:
            config.objects.append(ObjectTemplate("cup", variant, water=True))
        task = TaskSpec("pour", frozenset({"cup", variant}), frozenset({"plate"}))
    else:
        base = [c for c in lang.STACK_COLORS if c != variant][0]
        task = TaskSpec("stack", frozenset({"block", variant}),
                        frozenset({"block", base}))
    return config, int(rng.integers(2**31)), task


_demo_scene = task_scene_config


def hash_mod(*parts) -> int:
    """Stable small integer from string/int parts (not Python's salted hash)."""
    import hashlib
    h = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:4], "big")


def validate_stage1_file(path: str | Path) -> dict:
    """Validate every record and the coverage invariant; returns a summary."""
    signals_seen, families_seen = set(), set()
    n = 0
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec, scene, task, t = parse_transcript_record(line)
        problems = validate_transcript(t, scene, task)
        if problems:
            raise DatasetError(f"record {n}: {problems}")
        for turn in t.turns:
            if turn.signal:
                signals_seen.add(turn.signal)
        families_seen.add(task.family)
        n += 1
    missing_sig = set(lang.SIGNALS) - signals_seen
    missing_fam = set(FAMILIES) - families_seen
    if missing_sig:
        raise DatasetError(f"signal coverage missing: {sorted(missing_sig)}")
    if missing_fam:
        raise DatasetError(f"family coverage missing: {sorted(missing_fam)}")
    return {"records": n, "signals": sorted(signals_seen),
            "families": sorted(families_seen)}


def validate_stage2_file(path: str | Path, check_rollouts: bool = True) -> dict:
    n, ok = 0, 0
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec, config, reset_seed, task, chunks = parse_demo_record(line)
        if check_rollouts:
            state = replay_prefix(rec, world.reset(config, reset_seed))
            for c in chunks:
                state = world.run_chunk(state, c)
            if not world.success(state, task):
                raise DatasetError(f"demo {n} does not reach success")
            ok += 1
        n += 1
    return {"records": n, "verified": ok}
