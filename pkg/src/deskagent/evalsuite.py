"""Evaluation harness: success tables, condition similarity, collaboration
(Present/Absence), low-light and distractor robustness, dialogue probes.

Every entry point is deterministic given (pipeline, config, seed) and
returns plain dicts; ``write_report`` renders them as tab-separated text
plus a matplotlib figure.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import lang, router, scenegen, world
from .connect import condition_similarity
from .action import decode_chunk
from .pipeline import Pipeline
from .world import SceneState, TaskSpec


# -- scripted user oracle --------------------------------------------------


def oracle_user(scene: SceneState, task: TaskSpec):
    """Truthful template answer provider for quantitative evaluation.

    Answers the family's clarifying question from ground truth; anything
    it cannot parse gets the fallback answer (and the episode continues,
    recording the model's behavior).
    """
    expected = {f: lang.clarify_question(f) for f in scenegen.FAMILIES}

    def provide(question: tuple[str, ...], round_index: int) -> tuple[str, ...]:
        for family, q in expected.items():
            if tuple(question) == q and family == task.family:
                return lang.clarify_answer(family, task)
        return lang.FALLBACK_ANSWER

    return provide


# -- dialogue-only evaluation ----------------------------------------------


def eval_dialogue(pipe: Pipeline, n_episodes: int = 200,
                  seed: int = 0) -> dict:
    """Held-out dialogue metrics: signal grammar, resolution, verdicts.

    Runs the generate/answer/confirm loop on fresh mixed-mode episodes
    with the truthful oracle; no world stepping.
    """
    from .trainer import probe_episodes

    signal_ok = resolution_ok = verdict_ok = 0
    for scene, task, mode in probe_episodes(n_episodes, seed + 1):
        obs = world.render_observation(scene)
        present = scenegen.target_present(scene, task)
        want_verdict = lang.ACT if present else lang.REJ
        if mode == "unambiguous":
            instruction = lang.correct_instruction(task)
        else:
            instruction = lang.ambiguous_instruction(task.family)
        history = [lang.USER, *instruction, lang.AGENT]
        gen, _, no_signal = pipe.collab.generate(history, obs)
        if no_signal:
            continue
        if mode == "unambiguous":
            signal_ok += 1
            resolution_ok += 1  # nothing to resolve
            verdict_ok += gen[-1] == lang.ACT
            continue
        if gen[-1] != lang.AMBG:
            continue
        answer = lang.clarify_answer(task.family, task)
        history += gen + [lang.USER, *answer, lang.AGENT]
        gen2, _, ns2 = pipe.collab.generate(history, obs)
        if ns2 or gen2[-1] != lang.NOT_AMBG:
            continue
        signal_ok += 1
        body = tuple(gen2[:-1])
        parsed = lang.parse_instruction(body)
        if parsed is not None and parsed.target == task.target_descriptor \
                and not parsed.ambiguous:
            resolution_ok += 1
        confirm = [lang.USER, *body, lang.AGENT]
        gen3, _, ns3 = pipe.collab.generate(confirm, obs)
        if not ns3 and gen3 and gen3[-1] == want_verdict:
            verdict_ok += 1
    return {
        "n": n_episodes, "seed": seed,
        "signal_accuracy": signal_ok / n_episodes,
        "resolution_accuracy": resolution_ok / n_episodes,
        "verdict_accuracy": verdict_ok / n_episodes,
    }


# -- task success ----------------------------------------------------------


def _episode(pipe: Pipeline, family: str, variant: str, trial: int,
             seed: int, mode: str, brightness: float = 1.0,
             distractor: bool = False,
             max_chunks: int = 6) -> router.EpisodeResult:
    scene_seed = seed * 5_000_011 + scenegen.hash_mod(
        "eval", family, variant, trial, mode, brightness, distractor)
    config, reset_seed, task = scenegen.task_scene_config(
        family, variant, scene_seed, brightness, distractor)
    scene = world.reset(config, reset_seed)
    if mode == "ambiguous_with_oracle":
        instruction = lang.ambiguous_instruction(family)
    elif mode == "correct_direct":
        instruction = lang.correct_instruction(task)
    else:
        raise ValueError(f"unknown eval mode: {mode}")
    return router.run_episode(pipe, oracle_user(scene, task), scene, task,
                              instruction, max_chunks=max_chunks,
                              seed=scene_seed % 1_000_000)


def eval_success(pipe: Pipeline, families=scenegen.FAMILIES,
                 trials_per_task: int = 50, mode: str = "ambiguous_with_oracle",
                 seed: int = 0, brightness: float = 1.0,
                 distractor: bool = False) -> dict:
    """k/N success per concrete task plus family averages."""
    tasks = {}
    for family in families:
        rates = []
        for variant in scenegen.task_variants(family):
            k = 0
            for trial in range(trials_per_task):
                res = _episode(pipe, family, variant, trial, seed, mode,
                               brightness, distractor)
                k += res.success
            tasks[f"{family}:{variant}"] = {"successes": k,
                                            "n": trials_per_task,
                                            "rate": k / trials_per_task}
            rates.append(k / trials_per_task)
        tasks[f"{family}:average"] = {"rate": float(np.mean(rates))}
    return {"mode": mode, "seed": seed, "n_per_task": trials_per_task,
            "brightness": brightness, "distractor": distractor,
            "tasks": tasks,
            "family_averages": {f: tasks[f"{f}:average"]["rate"]
                                for f in families}}


# -- condition similarity --------------------------------------------------


def rollout_mean_condition(pipe: Pipeline, scene: SceneState,
                           instruction: tuple[str, ...], max_chunks: int = 4,
                           seed: int = 0, modulation: bool = True
                           ) -> np.ndarray:
    """Condition averaged over a rollout (one sample per chunk boundary)."""
    from .action import ActionNormalizer

    normalizer = pipe.normalizer or ActionNormalizer(np.zeros(4),
                                                     np.full(4, 0.01))
    conds = []
    for k in range(max_chunks):
        obs = world.render_observation(scene)
        cond = pipe.condition(obs, instruction, modulation=modulation)
        conds.append(cond)
        flat = pipe.expert.sample_chunk(cond, seed=seed * 100 + k)
        scene = world.run_chunk(scene, decode_chunk(flat, normalizer))
    return np.mean(conds, axis=0)


def eval_similarity(pipe: Pipeline, scene: SceneState | None = None,
                    instructions: list[tuple[str, ...]] | None = None,
                    variant: str = "full", seed: int = 0) -> dict:
    """Pairwise cosine similarity of time-averaged conditions.

    Default probe: the three place instructions on one fixed scene that
    contains all three fruits. ``no_modulation`` bypasses the instruction
    entirely, so its off-diagonals are exactly 1.0.
    """
    if scene is None:
        config = world.SceneConfig(objects=[
            world.ObjectTemplate("plate", "white", position=world.PLATE_POS),
            world.ObjectTemplate("apple", "red"),
            world.ObjectTemplate("peach", "yellow"),
            world.ObjectTemplate("orange", "natural"),
        ])
        scene = world.reset(config, seed=seed + 17)
    if instructions is None:
        instructions = [
            lang.correct_instruction(TaskSpec("place", frozenset({kind}),
                                              frozenset({"plate"})))
            for kind in scenegen.PLACE_FRUITS
        ]
    if len(instructions) < 2:
        raise ValueError("similarity needs at least two instructions")
    conds = [rollout_mean_condition(pipe, scene, instr, seed=seed,
                                    modulation=(variant == "full"))
             for instr in instructions]
    matrix = condition_similarity(conds)
    off = matrix[~np.eye(len(conds), dtype=bool)]
    return {"variant": variant, "seed": seed,
            "instructions": [" ".join(i) for i in instructions],
            "matrix": matrix.tolist(),
            "max_offdiag": float(off.max()), "min_offdiag": float(off.min())}


# -- collaboration: Present / Absence --------------------------------------


def eval_present_absence(pipe: Pipeline, trials: int = 30,
                         seed: int = 0) -> dict:
    """ACT-and-succeed when the discussed target exists; REJ when absent."""
    present_ok = 0
    for trial in range(trials):
        family = scenegen.FAMILIES[trial % 3]
        mode_seed = seed * 11_000_003 + scenegen.hash_mod("present", trial)
        scene, task, _ = scenegen.sample_scene(family, "ambiguous", mode_seed)
        res = router.run_episode(pipe, oracle_user(scene, task), scene, task,
                                 lang.ambiguous_instruction(family),
                                 seed=mode_seed % 1_000_000)
        if res.resolved_instruction and lang.ACT in res.signals \
                and res.success:
            present_ok += 1
    absence_ok = 0
    for trial in range(trials):
        family = ("place", "pour")[trial % 2]  # stack has no absent mode
        mode_seed = seed * 13_000_001 + scenegen.hash_mod("absent", trial)
        scene, task, _ = scenegen.sample_scene(family, "absent_target",
                                               mode_seed)
        res = router.run_episode(pipe, oracle_user(scene, task), scene, task,
                                 lang.ambiguous_instruction(family),
                                 seed=mode_seed % 1_000_000)
        if res.terminal_phase == router.AgentPhase.REJECTED \
                and res.world_steps == 0:
            absence_ok += 1
    return {"seed": seed, "trials": trials,
            "present": present_ok, "absence": absence_ok}


# -- robustness ------------------------------------------------------------


def eval_action_success(pipe: Pipeline, trials_per_task: int = 20,
                        seed: int = 0, brightness: float = 1.0,
                        distractor: bool = False) -> float:
    """Action-path-only success: correct instruction, no dialogue gating.

    Used for paired robustness comparisons where one arm's dialogue stack
    has drifted; isolates perception/control from protocol failures.
    """
    total = k = 0
    for family in scenegen.FAMILIES:
        for variant in scenegen.task_variants(family):
            for trial in range(trials_per_task):
                scene_seed = seed * 5_000_011 + scenegen.hash_mod(
                    "act", family, variant, trial, brightness, distractor)
                config, reset_seed, task = scenegen.task_scene_config(
                    family, variant, scene_seed, brightness, distractor)
                scene = world.reset(config, reset_seed)
                _, ok = router.act_until_done(
                    pipe, scene, task, lang.correct_instruction(task),
                    max_chunks=6, seed=scene_seed % 1_000_000)
                k += ok
                total += 1
    return k / total


def eval_lowlight(pipe: Pipeline, ablation_pipe: Pipeline | None = None,
                  trials_per_task: int = 20, seed: int = 0,
                  brightness: float = 0.5) -> dict:
    """Success at full vs reduced brightness; paired with an unfrozen-encoder
    ablation when provided. Drops are measured on the action path."""
    out = {"seed": seed, "brightness_dim": brightness,
           "n_per_task": trials_per_task}
    bright = eval_action_success(pipe, trials_per_task, seed, 1.0)
    dim = eval_action_success(pipe, trials_per_task, seed, brightness)
    out["frozen_encoder"] = {"bright": bright, "dim": dim,
                             "drop": bright - dim}
    if ablation_pipe is not None:
        ab = eval_action_success(ablation_pipe, trials_per_task, seed, 1.0)
        ad = eval_action_success(ablation_pipe, trials_per_task, seed,
                                 brightness)
        out["unfrozen_encoder"] = {"bright": ab, "dim": ad, "drop": ab - ad}
    return out


def eval_distractor(pipe: Pipeline, trials: int = 20, seed: int = 0) -> dict:
    """Place-the-apple with and without a pomegranate lookalike present."""
    counts = {}
    for arm, distractor in (("plain", False), ("distractor", True)):
        k = 0
        for trial in range(trials):
            res = _episode(pipe, "place", "apple", trial, seed,
                           "ambiguous_with_oracle", distractor=distractor)
            k += res.success
        counts[arm] = {"successes": k, "n": trials, "rate": k / trials}
    counts["drop"] = counts["plain"]["rate"] - counts["distractor"]["rate"]
    return {"seed": seed, "trials": trials, **counts}


# -- report rendering ------------------------------------------------------


def _flatten(report: dict, prefix: str = "") -> list[tuple[str, object]]:
    rows = []
    for key in sorted(report):
        val = report[key]
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            rows += _flatten(val, f"{name}.")
        elif isinstance(val, list) and val and isinstance(val[0], list):
            for i, row in enumerate(val):
                rows.append((f"{name}[{i}]",
                             " ".join(f"{x:.6f}" for x in row)))
        else:
            rows.append((name, val))
    return rows


def write_report(report: dict, out_dir: str | Path, name: str) -> Path:
    """Emit ``name.tsv`` (flat key/value rows) and ``name.png`` alongside."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tsv = out / f"{name}.tsv"
    lines = [f"{k}\t{v}" for k, v in _flatten(report)]
    tsv.write_text("\n".join(lines) + "\n")
    (out / f"{name}.json").write_text(
        json.dumps(report, sort_keys=True, indent=1) + "\n")
    _render_figure(report, out / f"{name}.png", name)
    return tsv


def _render_figure(report: dict, path: Path, title: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    if "matrix" in report:
        m = np.array(report["matrix"])
        im = ax.imshow(m, vmin=0.0, vmax=1.0, cmap="viridis")
        labels = [i.split()[-3] if len(i.split()) > 3 else i
                  for i in report.get("instructions", range(len(m)))]
        ax.set_xticks(range(len(m)), labels)
        ax.set_yticks(range(len(m)), labels)
        for i in range(len(m)):
            for j in range(len(m)):
                ax.text(j, i, f"{m[i, j]:.3f}", ha="center", va="center",
                        color="white")
        fig.colorbar(im, ax=ax)
    else:
        rows = [(k, v) for k, v in _flatten(report)
                if isinstance(v, (int, float)) and not isinstance(v, bool)
                and ("rate" in k or "drop" in k or "accuracy" in k
                     or k in ("present", "absence"))]
        if rows:
            keys, vals = zip(*rows)
            ax.barh(range(len(vals)), vals, color="#3b7dd8")
            ax.set_yticks(range(len(keys)), keys, fontsize=7)
            ax.invert_yaxis()
        else:
            ax.text(0.5, 0.5, "no numeric summary", ha="center")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
