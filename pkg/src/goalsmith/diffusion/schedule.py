"""Noise schedules and the DDIM inference-step grid.

alpha_bar is indexed by the training timestep k in [0, T_train] with
alpha_bar[0] = 1 exactly, so the final inference step lands on a clean image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..scene.spec import InputError

T_TRAIN_DEFAULT = 1000


def cosine_alpha_bar(t_train: int, s: float = 0.008, domain_stop: float = 0.96) -> np.ndarray:
    """Squared-cosine alpha_bar evaluated on [0, domain_stop] of its domain.

    Stopping short of the full domain keeps the terminal SNR strictly positive
    (alpha_bar[T] ~ 4e-3 at the default), which pixel-space DDIM needs: with a
    zero terminal SNR the first sampling step divides by ~sqrt(alpha_bar)=1e-5
    and the trajectory never reaches the data manifold.
    """
    k = np.arange(t_train + 1, dtype=np.float64) * (domain_stop / t_train)
    f = np.cos((k + s) / (1 + s) * math.pi / 2) ** 2
    ab = f / f[0]
    betas = np.clip(1.0 - ab[1:] / ab[:-1], 0.0, 0.999)
    return np.concatenate([[1.0], np.cumprod(1.0 - betas)])


def linear_alpha_bar(t_train: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> np.ndarray:
    betas = np.linspace(beta_start, beta_end, t_train, dtype=np.float64)
    return np.concatenate([[1.0], np.cumprod(1.0 - betas)])


@dataclass
class NoiseSchedule:
    kind: str = "cosine"
    t_train: int = T_TRAIN_DEFAULT
    params: dict | None = None

    def __post_init__(self):
        params = self.params or {}
        if self.kind == "cosine":
            ab = cosine_alpha_bar(self.t_train, **params)
        elif self.kind == "linear":
            ab = linear_alpha_bar(self.t_train, **params)
        else:
            raise InputError(f"unknown schedule kind {self.kind!r}")
        self.alpha_bar = torch.from_numpy(ab)

    def to_meta(self) -> dict:
        return {"kind": self.kind, "t_train": self.t_train, "params": self.params or {}}

    @classmethod
    def from_meta(cls, meta: dict) -> "NoiseSchedule":
        return cls(kind=meta["kind"], t_train=meta["t_train"], params=meta.get("params") or None)

    def tau(self, step: int, total_steps: int) -> int:
        """Training timestep for inference step `step` in [0, total_steps]."""
        if not (0 <= step <= total_steps):
            raise InputError(f"step {step} outside [0, {total_steps}]")
        return (self.t_train * step) // total_steps

    def ab(self, k: int, dtype=torch.float32) -> torch.Tensor:
        return self.alpha_bar[k].to(dtype)
