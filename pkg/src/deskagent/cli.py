"""Command-line interface: data generation, training, evaluation, serving.

Every evaluation command writes a delimited report (``<name>.tsv`` plus a
machine-readable ``<name>.json``) and a rendered figure (``<name>.png``)
into the report directory.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

DEFAULT_STAGE1_COUNTS = {"ambiguous": 100, "unambiguous": 50,
                         "absent_target": 100}


@click.group()
def main() -> None:
    """Clarify-then-act tabletop agent toolkit."""


# -- data ------------------------------------------------------------------


@main.command()
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Output directory for the two dataset files.")
@click.option("--dialogues-per-mode", default=None, type=int,
              help="Override per-family record count for every dialogue "
                   "mode (default: 60 ambiguous / 40 unambiguous / 40 "
                   "absent).")
@click.option("--demos-per-task", default=80, show_default=True, type=int)
@click.option("--seed", default=1, show_default=True, type=int)
def datagen(out: Path, dialogues_per_mode: int | None, demos_per_task: int,
            seed: int) -> None:
    """Generate the dialogue and demonstration datasets."""
    from . import scenegen

    out.mkdir(parents=True, exist_ok=True)
    counts = (dict.fromkeys(DEFAULT_STAGE1_COUNTS, dialogues_per_mode)
              if dialogues_per_mode is not None else DEFAULT_STAGE1_COUNTS)
    n1 = scenegen.build_stage1(out / "dialogues.jsonl", counts, seed)
    n2 = scenegen.build_stage2(out / "demos.jsonl", demos_per_task, seed)
    click.echo(f"wrote {n1} dialogue transcripts -> {out / 'dialogues.jsonl'}")
    click.echo(f"wrote {n2} demonstrations      -> {out / 'demos.jsonl'}")


@main.command()
@click.option("--dialogues", type=click.Path(exists=True, path_type=Path))
@click.option("--demos", type=click.Path(exists=True, path_type=Path))
@click.option("--check-rollouts/--no-check-rollouts", default=True,
              show_default=True)
def validate(dialogues: Path | None, demos: Path | None,
             check_rollouts: bool) -> None:
    """Validate dataset files: grammar, replay determinism, demo success."""
    from . import scenegen

    if dialogues is None and demos is None:
        raise click.UsageError("provide --dialogues and/or --demos")
    if dialogues is not None:
        stats = scenegen.validate_stage1_file(dialogues)
        click.echo(f"{dialogues}: {json.dumps(stats, sort_keys=True)}")
    if demos is not None:
        stats = scenegen.validate_stage2_file(demos,
                                              check_rollouts=check_rollouts)
        click.echo(f"{demos}: {json.dumps(stats, sort_keys=True)}")


# -- training --------------------------------------------------------------


@main.command("train-stage1")
@click.option("--data", type=click.Path(exists=True, path_type=Path),
              required=True, help="Dialogue transcript dataset (jsonl).")
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Checkpoint file to write.")
@click.option("--epochs", default=80, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--log-every", default=5, show_default=True, type=int)
def train_stage1_cmd(data: Path, out: Path, epochs: int, seed: int,
                     log_every: int) -> None:
    """Train the dialogue model (stage 1); the encoder stays frozen."""
    from .pipeline import Pipeline
    from .trainer import stage1_config, train_stage1

    pipe = Pipeline.create(seed=seed)
    logs = train_stage1(pipe, data, stage1_config(epochs=epochs, seed=seed))
    for entry in logs:
        if entry["epoch"] % log_every == 0 or entry is logs[-1]:
            click.echo(f"epoch {entry['epoch']:4d}  loss {entry['loss']:.4f}")
    out.parent.mkdir(parents=True, exist_ok=True)
    pipe.save(out, extra_meta={"stage": 1})
    click.echo(f"saved -> {out}")


@main.command("train-stage2")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path),
              required=True, help="Stage-1 checkpoint to start from.")
@click.option("--data", type=click.Path(exists=True, path_type=Path),
              required=True, help="Demonstration dataset (jsonl).")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--variant", default="connect_action", show_default=True,
              help="Which parameter groups train; the default keeps the "
                   "dialogue stack byte-frozen.")
@click.option("--epochs", default=300, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--log-every", default=50, show_default=True, type=int)
def train_stage2_cmd(checkpoint: Path, data: Path, out: Path, variant: str,
                     epochs: int, seed: int, log_every: int) -> None:
    """Train connection + action expert on demonstrations (stage 2)."""
    from .pipeline import Pipeline
    from .trainer import stage2_config, train_stage2

    pipe, _ = Pipeline.load(checkpoint)
    cfg = stage2_config(variant=variant, epochs=epochs, seed=seed)
    logs = train_stage2(pipe, data, cfg)
    for entry in logs:
        if entry["epoch"] % log_every == 0 or entry is logs[-1]:
            click.echo(f"epoch {entry['epoch']:4d}  loss {entry['loss']:.4f}")
    out.parent.mkdir(parents=True, exist_ok=True)
    pipe.save(out, extra_meta={"stage": 2, "variant": variant})
    click.echo(f"saved -> {out}")


@main.command()
@click.option("--checkpoint", "stage1_ckpt",
              type=click.Path(exists=True, path_type=Path), required=True,
              help="Stage-1 checkpoint each variant restarts from.")
@click.option("--data", type=click.Path(exists=True, path_type=Path),
              required=True, help="Demonstration dataset (jsonl).")
@click.option("--report", type=click.Path(path_type=Path), required=True,
              help="Report directory.")
@click.option("--epochs", default=300, show_default=True, type=int)
@click.option("--trials-per-task", default=10, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def ablate(stage1_ckpt: Path, data: Path, report: Path, epochs: int,
           trials_per_task: int, seed: int) -> None:
    """Run the stage-2 training-variant grid and gate each variant."""
    from .evalsuite import write_report
    from .trainer import run_ablation_grid

    grid = run_ablation_grid(stage1_ckpt, data, epochs=epochs,
                             trials_per_task=trials_per_task, seed=seed)
    path = write_report(grid, report, "ablation")
    for variant, row in grid["variants"].items():
        click.echo(f"{variant:20s} dialogue {row['dialogue_score']:.3f}  "
                   f"success {row['success_score']:.3f}  "
                   f"{'PASS' if row['passes'] else 'fail'}")
    click.echo(f"report -> {path}")


# -- evaluation ------------------------------------------------------------


EVAL_SUITES = ("main", "dialogue", "similarity", "present-absence",
               "lowlight", "distractor")


@main.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--suite", type=click.Choice(EVAL_SUITES), default="main",
              show_default=True)
@click.option("--report", type=click.Path(path_type=Path), required=True,
              help="Report directory.")
@click.option("--trials", default=20, show_default=True, type=int,
              help="Trials per task (or per arm, suite-dependent).")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--ablation-checkpoint",
              type=click.Path(exists=True, path_type=Path), default=None,
              help="Unfrozen-encoder arm for the lowlight suite.")
def eval_cmd(checkpoint: Path, suite: str, report: Path, trials: int,
             seed: int, ablation_checkpoint: Path | None) -> None:
    """Run one evaluation suite and write its report files."""
    from . import evalsuite
    from .pipeline import Pipeline

    pipe, _ = Pipeline.load(checkpoint)
    if suite == "main":
        out = evalsuite.eval_success(pipe, trials_per_task=trials, seed=seed)
    elif suite == "dialogue":
        out = evalsuite.eval_dialogue(pipe, n_episodes=max(trials, 50),
                                      seed=seed)
    elif suite == "similarity":
        out = {
            "full": evalsuite.eval_similarity(pipe, variant="full",
                                              seed=seed),
            "no_modulation": evalsuite.eval_similarity(
                pipe, variant="no_modulation", seed=seed),
        }
    elif suite == "present-absence":
        out = evalsuite.eval_present_absence(pipe, trials=max(trials, 30),
                                             seed=seed)
    elif suite == "lowlight":
        ab = None
        if ablation_checkpoint is not None:
            ab, _ = Pipeline.load(ablation_checkpoint)
        out = evalsuite.eval_lowlight(pipe, ablation_pipe=ab,
                                      trials_per_task=trials, seed=seed)
    else:  # distractor
        out = evalsuite.eval_distractor(pipe, trials=trials, seed=seed)
    name = suite.replace("-", "_")
    if suite == "similarity":
        # one figure per arm so the heatmaps render individually
        evalsuite.write_report(out["full"], report, f"{name}_full")
        path = evalsuite.write_report(out["no_modulation"], report,
                                      f"{name}_no_modulation")
    else:
        path = evalsuite.write_report(out, report, name)
    click.echo(json.dumps(out, sort_keys=True, default=float))
    click.echo(f"report -> {path}")


# -- interactive / service -------------------------------------------------


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--scenario", default="place-ambiguous", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
def chat(checkpoint: Path, scenario: str, seed: int) -> None:
    """Terminal chat with the agent on one scenario."""
    from .pipeline import Pipeline
    from .service import SCENARIOS, run_chat

    if scenario not in SCENARIOS:
        raise click.UsageError(
            f"unknown scenario; choose from {', '.join(sorted(SCENARIOS))}")
    pipe, _ = Pipeline.load(checkpoint)
    run_chat(pipe, scenario, seed=seed)


@main.command()
@click.option("--checkpoints", type=click.Path(exists=True, path_type=Path),
              required=True, help="Directory of *.ckpt files to serve.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(checkpoints: Path, host: str, port: int) -> None:
    """Serve the session API (REST + WebSocket)."""
    import uvicorn

    from .service import SessionHub, build_app

    app = build_app(SessionHub(checkpoints))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
