"""Shared fixtures: a pipeline whose dialogue turns come from a script."""

import numpy as np
import pytest

from deskagent import scenegen
from deskagent.action import ActionNormalizer, DiffusionConfig
from deskagent.pipeline import Pipeline


SMALL_DIFFUSION = DiffusionConfig(timesteps=5, hidden=32, n_blocks=1)


def make_scripted_pipeline(agent_turns, seed=0):
    """Pipeline whose ``generate`` replays canned utterances.

    ``agent_turns``: iterable of token tuples (each normally ending in a
    signal token), or a callable (history, obs) -> token list. Everything
    downstream of generation (embedding, condition, sampler, world) runs
    for real, just with a tiny denoiser so rollouts stay fast.
    """
    pipe = Pipeline.create(seed=seed, diffusion_cfg=SMALL_DIFFUSION)
    pipe.normalizer = ActionNormalizer(np.zeros(4), np.full(4, 0.01))
    if callable(agent_turns):
        def fake_generate(history, obs, max_len=None):
            return list(agent_turns(history, obs)), np.zeros(64), False
    else:
        queue = [tuple(t) for t in agent_turns]

        def fake_generate(history, obs, max_len=None):
            if not queue:
                return [], None, True
            return list(queue.pop(0)), np.zeros(64), False
    pipe.collab.generate = fake_generate
    return pipe


def pipeline_for_transcript(transcript, seed=0):
    """Scripted pipeline replaying an oracle dialogue transcript."""
    turns = [t.text for t in transcript.turns if t.speaker == "agent"]
    return make_scripted_pipeline(turns, seed=seed)


def oracle_answers(transcript):
    """Answer provider replaying the user side of a transcript."""
    answers = [t.text for t in transcript.turns if t.speaker == "user"]

    def provide(question, round_index):
        return answers[round_index] if round_index < len(answers) else \
            ("i", "dont", "understand")

    return provide


@pytest.fixture()
def ambiguous_place():
    scene, task, _ = scenegen.sample_scene("place", "ambiguous", 11)
    transcript = scenegen.synthesize_dialogue(scene, task, "ambiguous")
    return scene, task, transcript
