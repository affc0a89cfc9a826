"""Grayscale export of layer-averaged 16x16 cross-attention maps."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image

from ..diffusion.sampler import AttentionRecord, DiffusionTrajectory
from ..scene.spec import InputError
from ..text import PROMPT_LEN

GRID_RESOLUTION = 16
DEFAULT_TIMESTEPS = (50, 40, 30, 20, 10, 0)


def average_map(record: AttentionRecord, t: int, token: int,
                resolution: int = GRID_RESOLUTION, batch_index: int = 0) -> np.ndarray:
    """Mean over all cross layers at the given resolution for one timestep.

    Timestep 0 aliases the final sampling step (t=1), matching the usual
    "t = 50 .. 0" labelling of trajectory visualizations.
    """
    if not (0 <= token < PROMPT_LEN):
        raise InputError(f"token index {token} outside [0, {PROMPT_LEN})")
    recorded = record.timesteps()
    if not recorded:
        raise InputError("record holds no attention maps")
    t_eff = max(t, 1)
    if t_eff not in recorded:
        raise InputError(f"no maps recorded at timestep {t} (have {recorded})")
    cells = resolution * resolution
    maps = []
    for layer in record.layers_at(t_eff):
        m = record.maps[(layer, t_eff)]
        if m.dim() == 3:
            m = m[batch_index]
        if m.shape[0] == cells:
            maps.append(m[:, token].reshape(resolution, resolution).numpy())
    if not maps:
        raise InputError(f"no {resolution}x{resolution} cross layers at t={t}")
    return np.mean(maps, axis=0)


def to_grayscale(arr: np.ndarray) -> np.ndarray:
    lo, hi = float(arr.min()), float(arr.max())
    if hi - lo < 1e-12:
        return np.full(arr.shape, 127, dtype=np.uint8)
    return np.round((arr - lo) / (hi - lo) * 255.0).astype(np.uint8)


def export_attention_grid(trajectory_or_record, timesteps=DEFAULT_TIMESTEPS,
                          token: int = 0, out_dir=".", prefix: str = "attn",
                          batch_index: int = 0) -> list:
    """One min-max-normalized 8-bit grayscale PNG per requested timestep."""
    record = (trajectory_or_record.attention
              if isinstance(trajectory_or_record, DiffusionTrajectory)
              else trajectory_or_record)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in timesteps:
        arr = average_map(record, t, token, batch_index=batch_index)
        path = out_dir / f"{prefix}_t{t:02d}_tok{token:02d}.png"
        Image.fromarray(to_grayscale(arr), mode="L").save(path)
        paths.append(path)
    return paths
