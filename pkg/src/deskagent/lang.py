"""Closed vocabulary, instruction templates, and template parsing.

All language in the system comes from a small fixed token set so dialogue
correctness is machine-checkable and the sequence model stays tiny.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .world import COLORS, FRUITS, TaskSpec

AMBG = "<AMBG>"
NOT_AMBG = "<NOT_AMBG>"
ACT = "<ACT>"
REJ = "<REJ>"
SIGNALS = (AMBG, NOT_AMBG, ACT, REJ)

PAD = "<PAD>"
USER = "<USER>"
AGENT = "<AGENT>"
OBS = "<OBS>"
SPECIALS = (PAD, OBS, USER, AGENT)

WORDS = (
    "put", "the", "on", "plate", "fruit", "pour", "water", "from", "cup",
    "onto", "stack", "block", "blocks", "top", "of", "together", "which",
    "do", "you", "mean", "color", "one", "i", "dont", "understand",
    "apple", "peach", "orange", "pomegranate",
    "red", "green", "white", "blue", "yellow", "natural",
)

FRUIT_COLOR = {"apple": "red", "peach": "yellow", "orange": "natural",
               "pomegranate": "red"}
STACK_COLORS = ("blue", "yellow")
CUP_COLORS = ("red", "green", "white")


class Vocab:
    """Token <-> id table; closed over everything the generators emit."""

    def __init__(self, tokens: tuple[str, ...] | None = None):
        self.tokens = tuple(tokens) if tokens else SPECIALS + SIGNALS + WORDS
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, toks) -> list[int]:
        return [self.index[t] for t in toks]

    def decode(self, ids) -> list[str]:
        return [self.tokens[i] for i in ids]

    def content_hash(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode()).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(list(self.tokens)))

    @staticmethod
    def load(path: str | Path) -> "Vocab":
        return Vocab(tuple(json.loads(Path(path).read_text())))


DEFAULT_VOCAB = Vocab()


# -- templates -------------------------------------------------------------


def correct_instruction(task: TaskSpec) -> tuple[str, ...]:
    if task.family == "place":
        (cat,) = [t for t in task.target_descriptor if t in FRUITS]
        return ("put", "the", cat, "on", "the", "plate")
    if task.family == "pour":
        (color,) = [t for t in task.target_descriptor if t in COLORS]
        return ("pour", "the", "water", "from", "the", color, "cup",
                "onto", "the", "plate")
    if task.family == "stack":
        (c1,) = [t for t in task.target_descriptor if t in COLORS]
        (c2,) = [t for t in task.destination_descriptor if t in COLORS]
        return ("stack", "the", c1, "block", "on", "top", "of", "the",
                c2, "block")
    raise ValueError(task.family)


def ambiguous_instruction(family: str) -> tuple[str, ...]:
    if family == "place":
        return ("put", "the", "fruit", "on", "the", "plate")
    if family == "pour":
        return ("pour", "the", "water", "from", "the", "cup", "onto",
                "the", "plate")
    if family == "stack":
        return ("stack", "the", "blocks", "together")
    raise ValueError(family)


def clarify_question(family: str) -> tuple[str, ...]:
    if family == "place":
        return ("which", "fruit", "do", "you", "mean")
    if family == "pour":
        return ("which", "color", "cup", "do", "you", "mean")
    if family == "stack":
        return ("which", "color", "block", "on", "top")
    raise ValueError(family)


def clarify_answer(family: str, task: TaskSpec) -> tuple[str, ...]:
    if family == "place":
        (cat,) = [t for t in task.target_descriptor if t in FRUITS]
        return ("the", cat)
    (color,) = [t for t in task.target_descriptor if t in COLORS]
    return ("the", color, "one")


FALLBACK_ANSWER = ("i", "dont", "understand")


@dataclass(frozen=True)
class ParsedInstruction:
    family: str
    ambiguous: bool
    target: frozenset[str]
    destination: frozenset[str]


def parse_instruction(tokens: tuple[str, ...]) -> ParsedInstruction | None:
    """Recover family and descriptors from a templated instruction."""
    t = tuple(tokens)
    if len(t) == 6 and t[0] == "put" and t[3:] == ("on", "the", "plate"):
        word = t[2]
        if word == "fruit":
            return ParsedInstruction("place", True, frozenset({"fruit"}),
                                     frozenset({"plate"}))
        if word in FRUITS:
            return ParsedInstruction("place", False, frozenset({word}),
                                     frozenset({"plate"}))
        return None
    if t[:1] == ("pour",):
        if t == ("pour", "the", "water", "from", "the", "cup", "onto",
                 "the", "plate"):
            return ParsedInstruction("pour", True, frozenset({"cup"}),
                                     frozenset({"plate"}))
        if (len(t) == 10 and t[:5] == ("pour", "the", "water", "from", "the")
                and t[6:] == ("cup", "onto", "the", "plate") and t[5] in COLORS):
            return ParsedInstruction("pour", False, frozenset({"cup", t[5]}),
                                     frozenset({"plate"}))
        return None
    if t[:1] == ("stack",):
        if t == ("stack", "the", "blocks", "together"):
            return ParsedInstruction("stack", True, frozenset({"block"}),
                                     frozenset({"block"}))
        if (len(t) == 10 and t[0] == "stack" and t[3] == "block"
                and t[4:8] == ("on", "top", "of", "the") and t[9] == "block"
                and t[2] in COLORS and t[8] in COLORS):
            return ParsedInstruction("stack", False,
                                     frozenset({"block", t[2]}),
                                     frozenset({"block", t[8]}))
        return None
    return None


def task_from_parse(p: ParsedInstruction) -> TaskSpec:
    return TaskSpec(family=p.family, target_descriptor=p.target,
                    destination_descriptor=p.destination)
