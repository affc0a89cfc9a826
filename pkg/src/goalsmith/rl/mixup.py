"""Mixup between goal (positive) and replay (negative) image batches."""

from __future__ import annotations

import numpy as np
import torch

from ..scene.spec import InputError


def mixup_batch(pos: torch.Tensor, neg: torch.Tensor, alpha: float,
                rng: np.random.Generator | None = None,
                lam: torch.Tensor | None = None):
    """Per-pair lambda ~ Beta(alpha, alpha); returns (mixed, soft labels).

    Labels equal the interpolation weight itself (positive=1, negative=0).
    An explicit `lam` vector overrides the draw (used by tests and endpoints).
    """
    if pos.shape != neg.shape:
        raise InputError(f"batch shapes differ: {tuple(pos.shape)} vs {tuple(neg.shape)}")
    if alpha <= 0:
        raise InputError("mixup alpha must be > 0")
    b = pos.shape[0]
    if lam is None:
        rng = rng or np.random.default_rng()
        lam = torch.from_numpy(rng.beta(alpha, alpha, size=b).astype(np.float32))
    else:
        lam = torch.as_tensor(lam, dtype=pos.dtype)
        if lam.shape != (b,):
            raise InputError("lam must have one entry per pair")
    shape = (b,) + (1,) * (pos.dim() - 1)
    mixed = lam.reshape(shape) * pos + (1.0 - lam.reshape(shape)) * neg
    return mixed, lam
