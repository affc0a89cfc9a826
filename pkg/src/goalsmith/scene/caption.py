"""Templated captions over a fixed vocabulary.

These strings double as diffusion training captions and as editing source
prompts, so every word here must be in the tokenizer vocabulary.
"""

from __future__ import annotations

from .spec import InputError, SceneSpec

WIPE_DIRTY = "a robot white table with markings on it"
WIPE_CLEAN = "a robot white table with nothing on it"
PUSH = "a photo of a sks cube and a gripper on a white table"
LED_RED = "a red cylinder on a white table"
LED_GREEN = "a green cylinder on a white table"

CLASS_PROMPT_CUBE = "a photo of a red cube"
CLASS_PROMPT_GRIPPER = "a photo of a franka robot gripper"

ALL_TEMPLATES = (
    WIPE_DIRTY, WIPE_CLEAN, PUSH, LED_RED, LED_GREEN,
    CLASS_PROMPT_CUBE, CLASS_PROMPT_GRIPPER,
)


def caption(spec: SceneSpec) -> str:
    if spec.env_id == "wipe":
        return WIPE_DIRTY if spec.alive_count > 0 else WIPE_CLEAN
    if spec.env_id == "push":
        return PUSH
    if spec.env_id == "led":
        return LED_GREEN if spec.led_state == "green" else LED_RED
    raise InputError(f"unknown env_id {spec.env_id!r}")


def target_caption(env_id: str) -> str:
    """Target prompt P* for the appearance-editing presets."""
    if env_id == "wipe":
        return WIPE_CLEAN
    if env_id == "led":
        return LED_GREEN
    raise InputError(f"no appearance target prompt for {env_id!r}")
