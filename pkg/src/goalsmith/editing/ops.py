"""Attention-map editing operators.

All operators treat maps as (..., h*w, 24) tensors whose rows are post-softmax
attention weights. Control applies during the first N of T inference steps,
i.e. exactly when t > T - N counting steps t = T..1. Edited rows are
deliberately NOT re-normalized: strengthening and weakening act directly on
the map values.
"""

from __future__ import annotations

import math

import torch

from ..scene.spec import InputError
from ..diffusion.sampler import ContractError
from ..text import PROMPT_LEN

DEFAULT_WEAKEN = 0.01
DEFAULT_GAIN = 1.0


def control_active(t: int, total_steps: int, budget: int) -> bool:
    return t > total_steps - budget


def p2p_edit(source_maps: torch.Tensor, target_maps: torch.Tensor,
             t: int, total_steps: int, budget: int) -> torch.Tensor:
    """Inject source maps for the first `budget` steps, else keep the target's."""
    if source_maps.shape != target_maps.shape:
        raise ContractError(
            f"map shapes differ: {tuple(source_maps.shape)} vs {tuple(target_maps.shape)}")
    return source_maps if control_active(t, total_steps, budget) else target_maps


def validate_box(box) -> tuple:
    r0, c0, r1, c1 = (float(v) for v in box)
    if not (0.0 <= r0 < r1 <= 1.0 and 0.0 <= c0 < c1 <= 1.0):
        raise InputError(f"invalid bounding box {box!r}")
    return r0, c0, r1, c1


def box_to_cells(box, map_hw: tuple) -> tuple:
    """Rasterize a fractional box to cell index ranges [r0, r1) x [c0, c1)."""
    r0, c0, r1, c1 = validate_box(box)
    h, w = map_hw
    return (
        math.floor(r0 * h), math.ceil(r1 * h),
        math.floor(c0 * w), math.ceil(c1 * w),
    )


def _square_hw(maps_or_cells) -> tuple:
    cells = maps_or_cells if isinstance(maps_or_cells, int) else maps_or_cells.shape[-2]
    side = int(round(math.sqrt(cells)))
    if side * side != cells:
        raise InputError(f"cannot infer square map shape from {cells} cells")
    return side, side


def strengthening_mask(box, map_hw: tuple, dtype=torch.float32) -> torch.Tensor:
    """Separable Gaussian bump over the box, peak 1 at its center, zero outside.

    sigma is a quarter of the box extent per axis; values are sampled at cell
    centers, so the rasterized max can sit slightly below 1 when the center
    falls between cells.
    """
    r0, c0, r1, c1 = validate_box(box)
    h, w = map_hw
    ri0, ri1, ci0, ci1 = box_to_cells(box, map_hw)
    if ri1 <= ri0 or ci1 <= ci0:
        raise InputError(f"box {box!r} rasterizes to zero area on {map_hw}")
    rc, cc = (r0 + r1) / 2, (c0 + c1) / 2
    sr, sc = (r1 - r0) / 4, (c1 - c0) / 4
    rows = (torch.arange(h, dtype=dtype) + 0.5) / h
    cols = (torch.arange(w, dtype=dtype) + 0.5) / w
    g = torch.exp(-0.5 * ((rows - rc) / sr) ** 2)[:, None] * \
        torch.exp(-0.5 * ((cols - cc) / sc) ** 2)[None, :]
    support = torch.zeros(h, w, dtype=torch.bool)
    support[ri0:ri1, ci0:ci1] = True
    return torch.where(support, g, torch.zeros_like(g)).reshape(h * w)


def weakening_mask(box, map_hw: tuple, weaken: float = DEFAULT_WEAKEN,
                   dtype=torch.float32) -> torch.Tensor:
    """Multiplier 1 inside the box, `weaken` outside."""
    if not (0.0 <= weaken <= 1.0):
        raise InputError(f"weakening constant {weaken} outside [0, 1]")
    h, w = map_hw
    ri0, ri1, ci0, ci1 = box_to_cells(box, map_hw)
    mask = torch.full((h, w), weaken, dtype=dtype)
    mask[ri0:ri1, ci0:ci1] = 1.0
    return mask.reshape(h * w)


def _check_tokens(token_indices) -> list:
    idx = [int(i) for i in token_indices]
    if not idx:
        raise InputError("token index set is empty")
    for i in idx:
        if not (0 <= i < PROMPT_LEN):
            raise InputError(f"token index {i} outside [0, {PROMPT_LEN})")
    return idx


def dd_edit(maps: torch.Tensor, box, token_indices, c, t: int,
            total_steps: int, budget: int, weaken: float = DEFAULT_WEAKEN) -> torch.Tensor:
    """Strengthen selected token columns inside the box, weaken them outside.

    For each token column i in the index set, while control is active:
        column_i <- column_i * WM + c * SM
    Columns outside the set and all steps past the budget are untouched.
    `c` may be a scalar or a tensor broadcastable over (batch, 1).
    """
    idx = _check_tokens(token_indices)
    if not control_active(t, total_steps, budget):
        return maps
    hw = _square_hw(maps)
    sm = strengthening_mask(box, hw, dtype=maps.dtype)
    wm = weakening_mask(box, hw, weaken, dtype=maps.dtype)
    out = maps.clone()
    cols = out[..., idx]                     # (..., h*w, |I|)
    if isinstance(c, torch.Tensor):
        c = c.to(maps.dtype).reshape(*c.shape, *([1] * (cols.dim() - c.dim())))
    out[..., idx] = cols * wm[..., None] + c * sm[..., None]
    return out


def p2p_dd_edit(source_maps: torch.Tensor, target_maps: torch.Tensor, box,
                token_indices, c, t: int, total_steps: int, budget: int,
                weaken: float = DEFAULT_WEAKEN) -> torch.Tensor:
    """Inject source maps first, then strengthen/weaken them (one shared budget)."""
    injected = p2p_edit(source_maps, target_maps, t, total_steps, budget)
    return dd_edit(injected, box, token_indices, c, t, total_steps, budget, weaken)


def auto_strength(maps: torch.Tensor, token_indices, gain: float = DEFAULT_GAIN) -> torch.Tensor:
    """Default strengthening scalar: gain times the pre-edit max over the
    selected columns, per batch element, keeping edits commensurate with
    softmax-scale values."""
    idx = _check_tokens(token_indices)
    cols = maps[..., idx]
    flat = cols.reshape(*cols.shape[:-2], -1) if cols.dim() > 2 else cols.reshape(-1)
    return flat.max(dim=-1).values * gain if cols.dim() > 2 else flat.max() * gain
