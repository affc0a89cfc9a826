"""Edit specifications: word-swap appearance edits and box-directed structure
edits, with JSON round-tripping shared by the dataset manifests, the gateway
API, and the browser studio."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..scene.spec import InputError
from ..text import PROMPT_LEN, sentence_length, tokenize
from .ops import DEFAULT_GAIN, DEFAULT_WEAKEN, validate_box


@dataclass
class AppearanceEdit:
    source_prompt: str
    target_prompt: str
    cross_steps: int = 40
    self_steps: int = 0

    def __post_init__(self):
        tokenize(self.source_prompt)
        tokenize(self.target_prompt)
        if sentence_length(self.source_prompt) != sentence_length(self.target_prompt):
            raise InputError("word-swap editing needs equal-length prompts")
        if self.cross_steps < 0 or self.self_steps < 0:
            raise InputError("editing step budgets must be >= 0")

    @property
    def kind(self) -> str:
        return "appearance"

    def to_dict(self) -> dict:
        return {
            "kind": "appearance",
            "source_prompt": self.source_prompt,
            "target_prompt": self.target_prompt,
            "cross_steps": self.cross_steps,
            "self_steps": self.self_steps,
        }


@dataclass
class StructureEdit:
    prompt: str
    box: tuple  # (row_min, col_min, row_max, col_max), fractions
    tokens: tuple
    steps: int = 10
    gain: float = DEFAULT_GAIN
    strength: float | None = None  # explicit c overrides the gain rule
    weaken: float = DEFAULT_WEAKEN
    self_steps: int = 0

    def __post_init__(self):
        tokenize(self.prompt)
        self.box = tuple(float(v) for v in self.box)
        validate_box(self.box)
        self.tokens = tuple(int(i) for i in self.tokens)
        if not self.tokens:
            raise InputError("token set must be non-empty")
        for i in self.tokens:
            if not (0 <= i < PROMPT_LEN):
                raise InputError(f"token index {i} outside [0, {PROMPT_LEN})")
        if self.steps < 0:
            raise InputError("editing steps must be >= 0")
        if self.gain < 0 or (self.strength is not None and self.strength < 0):
            raise InputError("strengthening scalar must be >= 0")

    @property
    def kind(self) -> str:
        return "structure"

    @property
    def source_prompt(self) -> str:
        return self.prompt

    def to_dict(self) -> dict:
        return {
            "kind": "structure",
            "prompt": self.prompt,
            "box": list(self.box),
            "tokens": list(self.tokens),
            "steps": self.steps,
            "gain": self.gain,
            "strength": self.strength,
            "weaken": self.weaken,
            "self_steps": self.self_steps,
        }


def edit_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "appearance":
        return AppearanceEdit(
            source_prompt=d["source_prompt"], target_prompt=d["target_prompt"],
            cross_steps=d.get("cross_steps", 40), self_steps=d.get("self_steps", 0))
    if kind == "structure":
        return StructureEdit(
            prompt=d["prompt"], box=tuple(d["box"]), tokens=tuple(d["tokens"]),
            steps=d.get("steps", 10), gain=d.get("gain", DEFAULT_GAIN),
            strength=d.get("strength"), weaken=d.get("weaken", DEFAULT_WEAKEN),
            self_steps=d.get("self_steps", 0))
    raise InputError(f"unknown edit kind {kind!r}")
