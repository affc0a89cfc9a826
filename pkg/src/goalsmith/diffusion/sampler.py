"""Deterministic DDIM sampling with classifier-free guidance and an
attention-controller hook.

Inference steps are numbered t = T..1; step t maps to training timestep
tau(t). The guided noise estimate is

    eps_hat = eps(x, null) + omega * (eps(x, prompt) - eps(x, null))

computed with the null branch skipped entirely at omega == 1 (so the output
is exactly independent of the null embedding) and the prompt branch skipped
at omega == 0. Controllers only ever see the conditional branch's attention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..scene.spec import InputError
from .schedule import NoiseSchedule

DEFAULT_STEPS = 50
DEFAULT_GUIDANCE = 7.5


class ContractError(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    steps: int = DEFAULT_STEPS
    guidance: float = DEFAULT_GUIDANCE

    def __post_init__(self):
        if self.steps < 1:
            raise InputError("steps must be >= 1")
        if self.guidance < 0:
            raise InputError("guidance must be >= 0")


@dataclass
class AttentionRecord:
    """Cross/self attention maps keyed by (layer, inference step t)."""

    maps: dict = field(default_factory=dict)
    overridden: dict = field(default_factory=dict)

    def add(self, layer: str, t: int, probs: torch.Tensor, overridden: bool):
        self.maps[(layer, t)] = probs.detach().clone()
        self.overridden[(layer, t)] = overridden

    def layers_at(self, t: int):
        return [layer for (layer, tt) in self.maps if tt == t]

    def timesteps(self):
        return sorted({t for (_, t) in self.maps})


class RecordingController:
    """Pass-through controller that stores conditional cross-attention maps."""

    def __init__(self, record_self=False, timesteps=None):
        self.record = AttentionRecord()
        self.record_self = record_self
        self.timesteps = set(timesteps) if timesteps is not None else None
        self.t = None

    def begin_step(self, t: int):
        self.t = t

    def __call__(self, kind: str, layer: str, probs: torch.Tensor) -> torch.Tensor:
        if kind == "cross" or (kind == "self" and self.record_self):
            if self.timesteps is None or self.t in self.timesteps:
                self.record.add(layer, self.t, probs, overridden=False)
        return probs


def to_tensor(images) -> torch.Tensor:
    """(H,W,3) or (B,H,W,3) float images in [0,1] -> (B,3,H,W) in [-1,1]."""
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    t = torch.from_numpy(np.ascontiguousarray(arr)).permute(0, 3, 1, 2)
    return t * 2.0 - 1.0


def to_images(x: torch.Tensor, squeeze: bool = False) -> np.ndarray:
    arr = ((x.detach() + 1.0) / 2.0).clamp(0, 1).permute(0, 2, 3, 1).cpu().numpy()
    if squeeze and arr.shape[0] == 1:
        return arr[0]
    return arr


def guided_eps(unet, schedule: NoiseSchedule, x, t, steps, prompt_emb, null_emb,
               guidance, controller=None):
    """Classifier-free guided noise estimate at inference step t."""
    k = torch.full((x.shape[0],), float(schedule.tau(t, steps)), dtype=x.dtype, device=x.device)
    if controller is not None:
        controller.begin_step(t)
    if guidance == 1.0:
        return unet(x, k, _expand(prompt_emb, x), controller)
    if guidance == 0.0:
        return unet(x, k, _expand(null_emb, x), None)
    eps_null = unet(x, k, _expand(null_emb, x), None)
    eps_cond = unet(x, k, _expand(prompt_emb, x), controller)
    return eps_null + guidance * (eps_cond - eps_null)


def _expand(emb: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    if emb.dim() == 2:
        emb = emb.unsqueeze(0)
    if emb.shape[0] == 1 and x.shape[0] > 1:
        emb = emb.expand(x.shape[0], -1, -1)
    return emb.to(x.dtype)


def ddim_step_to_prev(schedule: NoiseSchedule, x_t, eps, t, steps):
    """One deterministic reverse step: x_t -> x_{t-1}.

    The x0 estimate is clamped to the pixel range, which keeps high-guidance
    trajectories on the manifold; the clamp is inactive for on-distribution
    states so inversion round trips are unaffected.
    """
    dtype = x_t.dtype
    a_t = schedule.ab(schedule.tau(t, steps), dtype)
    a_prev = schedule.ab(schedule.tau(t - 1, steps), dtype)
    x0 = ((x_t - torch.sqrt(1 - a_t) * eps) / torch.sqrt(a_t)).clamp(-1.0, 1.0)
    return torch.sqrt(a_prev) * x0 + torch.sqrt(1 - a_prev) * eps


def ddim_step_to_next(schedule: NoiseSchedule, x_prev, eps, t, steps):
    """One inversion step: x_{t-1} -> x_t, using eps evaluated at (x_{t-1}, tau(t))."""
    dtype = x_prev.dtype
    a_t = schedule.ab(schedule.tau(t, steps), dtype)
    a_prev = schedule.ab(schedule.tau(t - 1, steps), dtype)
    x0 = (x_prev - torch.sqrt(1 - a_prev) * eps) / torch.sqrt(a_prev)
    return torch.sqrt(a_t) * x0 + torch.sqrt(1 - a_t) * eps


@dataclass
class DiffusionTrajectory:
    """States x_T..x_0 with the per-step null embeddings and attention used."""

    states: list
    null_embeddings: list
    attention: AttentionRecord
    config: SamplerConfig

    @property
    def x0(self) -> torch.Tensor:
        return self.states[-1]


def denoise_step(unet, schedule, x_t, t, prompt_emb, null_emb, guidance,
                 steps=DEFAULT_STEPS, controller=None):
    """One guided DDIM update; returns (x_{t-1}, AttentionRecord for step t)."""
    if not (1 <= t <= steps):
        raise InputError(f"t={t} outside [1, {steps}]")
    if controller is None:
        controller = RecordingController()
    with torch.no_grad():
        eps = guided_eps(unet, schedule, x_t, t, steps, prompt_emb, null_emb,
                         guidance, controller)
        x_prev = ddim_step_to_prev(schedule, x_t, eps, t, steps)
    record = getattr(controller, "record", AttentionRecord())
    return x_prev, record


def ddim_sample(unet, schedule, x_T, prompt_emb, config: SamplerConfig,
                null_emb=None, null_schedule=None, controller=None) -> DiffusionTrajectory:
    """Full deterministic trajectory from x_T down to x_0.

    null_schedule, when given, supplies one null embedding per step t=T..1
    (index 0 is step T); otherwise null_emb is used at every step.
    """
    T = config.steps
    if null_schedule is not None and len(null_schedule) != T:
        raise ContractError(f"null schedule has {len(null_schedule)} entries, want {T}")
    if null_schedule is None and null_emb is None and config.guidance != 1.0:
        raise InputError("need a null embedding unless guidance == 1")
    if controller is None:
        controller = RecordingController(timesteps=())
    states = [x_T]
    nulls = []
    x = x_T
    with torch.no_grad():
        for t in range(T, 0, -1):
            null_t = null_schedule[T - t] if null_schedule is not None else null_emb
            nulls.append(null_t)
            eps = guided_eps(unet, schedule, x, t, T, prompt_emb, null_t,
                             config.guidance, controller)
            x = ddim_step_to_prev(schedule, x, eps, t, T)
            states.append(x)
    record = controller.record if hasattr(controller, "record") else AttentionRecord()
    return DiffusionTrajectory(states=states, null_embeddings=nulls,
                               attention=record, config=config)
