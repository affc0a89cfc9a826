"""Random-crop augmentation: replicate-pad then crop back to size."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from ..scene.spec import InputError


def random_crop_augment(batch: torch.Tensor, pad: int,
                        gen: torch.Generator | None = None) -> torch.Tensor:
    """Shift each image by up to `pad` pixels per axis. pad=0 is the identity."""
    if pad < 0:
        raise InputError("pad must be >= 0")
    if pad == 0:
        return batch
    b, c, h, w = batch.shape
    offs = torch.randint(0, 2 * pad + 1, (b, 2), generator=gen)
    # clamped source indices reproduce replicate padding without materializing it
    rows = (offs[:, 0:1] - pad + torch.arange(h)).clamp_(0, h - 1)  # (b, h)
    cols = (offs[:, 1:2] - pad + torch.arange(w)).clamp_(0, w - 1)  # (b, w)
    flat = (rows[:, :, None] * w + cols[:, None, :]).reshape(b, 1, h * w)
    gathered = batch.reshape(b, c, -1).gather(2, flat.expand(b, c, h * w))
    return gathered.reshape(b, c, h, w)
