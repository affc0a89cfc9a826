"""Deterministic 64x64 renderer for the tabletop scenes.

Objects are drawn as flat-colored primitives on a near-white table, back to
front: target dot, stains, cube, LED disc, button, then the gripper glyph.
No anti-aliasing, no RNG: the image is a pure function of the SceneSpec.
"""

from __future__ import annotations

import numpy as np

from .spec import IMAGE_SIZE, InputError, Observation, SceneSpec

TABLE_COLOR = (0.93, 0.92, 0.90)
STAIN_COLOR = (0.13, 0.12, 0.11)
CUBE_COLOR = (0.78, 0.09, 0.07)
TARGET_COLOR = (0.05, 0.62, 0.12)
LED_RED = (0.85, 0.08, 0.06)
LED_GREEN = (0.08, 0.72, 0.10)
BUTTON_COLOR = (0.10, 0.12, 0.55)
GRIPPER_COLOR = (0.48, 0.48, 0.50)

CUBE_HALF = 5       # pixels; 10x10 square
GRIPPER_HALF = 3    # 7x7 square
LED_RADIUS = 7.0
TARGET_RADIUS = 2.5
STAIN_RADIUS = 1.2
BUTTON_HALF = 3

_ROWS, _COLS = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE]


def _px(frac: float) -> float:
    return frac * (IMAGE_SIZE - 1)


def _fill_square(img, center, half, color):
    r, c = _px(center[0]), _px(center[1])
    r0, r1 = int(round(r)) - half, int(round(r)) + half
    c0, c1 = int(round(c)) - half, int(round(c)) + half
    img[max(r0, 0) : r1 + 1, max(c0, 0) : c1 + 1] = color


def _fill_disc(img, center, radius, color):
    r, c = _px(center[0]), _px(center[1])
    mask = (_ROWS - r) ** 2 + (_COLS - c) ** 2 <= radius**2
    img[mask] = color


def render(spec: SceneSpec) -> Observation:
    """Render a SceneSpec to a float32 (64, 64, 3) image in [0, 1]."""
    if not isinstance(spec, SceneSpec):
        raise InputError("render expects a SceneSpec")
    img = np.empty((IMAGE_SIZE, IMAGE_SIZE, 3), dtype=np.float32)
    img[:] = TABLE_COLOR

    if spec.env_id == "push":
        _fill_disc(img, spec.target, TARGET_RADIUS, TARGET_COLOR)
    for pos, alive in spec.particles:
        if alive:
            _fill_disc(img, pos, STAIN_RADIUS, STAIN_COLOR)
    if spec.env_id == "push":
        _fill_square(img, spec.cube, CUBE_HALF, CUBE_COLOR)
    if spec.env_id == "led":
        color = LED_GREEN if spec.led_state == "green" else LED_RED
        _fill_disc(img, spec.light, LED_RADIUS, color)
        _fill_square(img, spec.button, BUTTON_HALF, BUTTON_COLOR)
    _fill_square(img, spec.gripper, GRIPPER_HALF, GRIPPER_COLOR)

    return Observation(image=img, step=spec.step_index)


def stain_mask(spec: SceneSpec, pad: int = 1) -> np.ndarray:
    """Boolean mask of pixels covered by any particle (alive or not), padded.

    Used by evaluation oracles to score edits against renderer ground truth.
    """
    mask = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=bool)
    for pos, _ in spec.particles:
        r, c = _px(pos[0]), _px(pos[1])
        mask |= (_ROWS - r) ** 2 + (_COLS - c) ** 2 <= (STAIN_RADIUS + pad) ** 2
    return mask


def object_mask(spec: SceneSpec, which: str, pad: int = 1) -> np.ndarray:
    """Ground-truth pixel mask for one rendered object class."""
    mask = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=bool)
    if which == "cube":
        r, c = _px(spec.cube[0]), _px(spec.cube[1])
        half = CUBE_HALF + pad
        mask = (np.abs(_ROWS - round(r)) <= half) & (np.abs(_COLS - round(c)) <= half)
    elif which == "gripper":
        r, c = _px(spec.gripper[0]), _px(spec.gripper[1])
        half = GRIPPER_HALF + pad
        mask = (np.abs(_ROWS - round(r)) <= half) & (np.abs(_COLS - round(c)) <= half)
    elif which == "light":
        r, c = _px(spec.light[0]), _px(spec.light[1])
        mask = (_ROWS - r) ** 2 + (_COLS - c) ** 2 <= (LED_RADIUS + pad) ** 2
    elif which == "stains":
        mask = stain_mask(spec, pad=pad)
    else:
        raise InputError(f"unknown object class {which!r}")
    return mask
