"""Trajectory recovery for a source image: DDIM inversion at guidance 1,
then per-step null-text embedding optimization at the editing guidance scale.

The optimizer is plain gradient descent with halving-on-increase line search,
so the per-step objective never increases across inner iterations. After
optimization the schedule is compared against the plain null schedule on full
reconstruction error, per image, and the loser is discarded; the optimized
result therefore never reconstructs worse than the naive one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .diffusion.model import DiffusionModel
from .diffusion.sampler import (
    ContractError,
    SamplerConfig,
    ddim_sample,
    ddim_step_to_next,
    ddim_step_to_prev,
    guided_eps,
    to_images,
    to_tensor,
)
from .io.container import array_hash, load_container, save_container
from .scene.spec import InputError

INVERSION_FORMAT = "goalsmith-inversion-v1"


@dataclass
class InversionConfig:
    learning_rate: float = 1e-2
    inner_iterations: int = 10
    guidance: float = 7.5
    early_stop: float = 1e-5
    max_halvings: int = 10
    steps: int = 50

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be > 0")
        if self.inner_iterations < 1:
            raise InputError("inner_iterations must be >= 1")


@dataclass
class InversionResult:
    pivots: list                     # x'_0 .. x'_T, each (B, 3, H, W)
    schedule: list                   # null embedding per step t=T..1, each (B, L, D)
    losses_before: np.ndarray        # (T, B) per-step loss before inner loop
    losses_after: np.ndarray         # (T, B) per-step loss after inner loop
    reconstruction: np.ndarray       # (B, H, W, 3) under the returned schedule
    recon_mae: np.ndarray            # (B,) in [0,1] image space
    naive_mae: np.ndarray            # (B,) plain-null reconstruction error
    used_fallback: np.ndarray        # (B,) bool
    prompt: str = ""
    source_hash: str = ""
    config: InversionConfig = field(default_factory=InversionConfig)

    @property
    def x_T(self) -> torch.Tensor:
        return self.pivots[-1]


def source_hash(images, prompt: str, model: DiffusionModel) -> str:
    arr = np.ascontiguousarray(np.asarray(images, dtype=np.float32))
    return array_hash(arr) + ":" + prompt + ":" + model.weights_hash()[:16]


def ddim_invert(model: DiffusionModel, images, prompt: str,
                steps: int = 50) -> list:
    """Reverse the sampling ODE at guidance 1; returns pivots x'_0 .. x'_T."""
    x = to_tensor(images)
    prompt_emb = model.prompt_tensor(prompt)
    pivots = [x]
    with torch.no_grad():
        for t in range(1, steps + 1):
            eps = guided_eps(model.unet, model.schedule, x, t, steps,
                             prompt_emb, None, guidance=1.0)
            x = ddim_step_to_next(model.schedule, x, eps, t, steps)
            pivots.append(x)
    return pivots


def _per_image_mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return ((a - b) ** 2).flatten(1).mean(dim=1)


def image_mae(a, b) -> np.ndarray:
    """Per-image mean absolute error in [0,1] image space."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.ndim == 3:
        a, b = a[None], b[None]
    return np.abs(a - b).reshape(a.shape[0], -1).mean(axis=1)


def null_text_optimize(model: DiffusionModel, pivots: list, prompt: str,
                       config: InversionConfig | None = None, progress=None):
    """Optimize one null embedding per timestep against the pivot trajectory.

    Returns (schedule, losses_before, losses_after, xbar_0). The inner loop is
    gradient descent with per-image backtracking: a step that would increase
    an image's loss is halved, and skipped outright if max_halvings halvings
    never find a decrease, so losses are non-increasing by construction.
    """
    config = config or InversionConfig()
    T = len(pivots) - 1
    unet, sched = model.unet, model.schedule
    prompt_emb = model.prompt_tensor(prompt).unsqueeze(0)
    base_null = model.null_embedding().unsqueeze(0)
    B = pivots[0].shape[0]
    omega = config.guidance

    phi = base_null.repeat(B, 1, 1)
    xbar = pivots[T]
    schedule = []
    losses_before = np.zeros((T, B))
    losses_after = np.zeros((T, B))

    def step_loss(phi_var, eps_cond, target, t):
        k = torch.full((B,), float(sched.tau(t, T)), dtype=xbar.dtype)
        eps_null = unet(xbar, k, phi_var)
        eps = eps_null + omega * (eps_cond - eps_null)
        x_prev = ddim_step_to_prev(sched, xbar, eps, t, T)
        return _per_image_mse(x_prev, target)

    for idx, t in enumerate(range(T, 0, -1)):
        target = pivots[t - 1]
        with torch.no_grad():
            k = torch.full((B,), float(sched.tau(t, T)), dtype=xbar.dtype)
            eps_cond = unet(xbar, k, prompt_emb.expand(B, -1, -1))

        if omega == 1.0:
            # guided estimate is independent of phi: gradient identically zero
            with torch.no_grad():
                loss = step_loss(phi, eps_cond, target, t)
            losses_before[idx] = losses_after[idx] = loss.numpy()
        else:
            phi_var = phi.clone().requires_grad_(True)
            loss = step_loss(phi_var, eps_cond, target, t)
            if not torch.isfinite(loss).all():
                raise RuntimeError(f"non-finite inversion loss at step t={t}")
            losses_before[idx] = loss.detach().numpy()
            grad = torch.autograd.grad(loss.sum(), phi_var)[0]
            cur_loss = loss.detach()
            for _ in range(config.inner_iterations):
                active = cur_loss > config.early_stop
                if not active.any():
                    break
                eta = torch.full((B, 1, 1), config.learning_rate, dtype=phi.dtype)
                accepted = torch.zeros(B, dtype=torch.bool)
                cand = phi
                for _ in range(config.max_halvings):
                    trial = phi - eta * grad
                    with torch.no_grad():
                        trial_loss = step_loss(trial, eps_cond, target, t)
                    better = (trial_loss <= cur_loss) & active & ~accepted
                    if better.any():
                        cand = torch.where(better[:, None, None], trial, cand)
                        cur_loss = torch.where(better, trial_loss, cur_loss)
                        accepted |= better
                    if (accepted | ~active).all():
                        break
                    eta = torch.where((accepted | ~active)[:, None, None], eta, eta * 0.5)
                phi = cand.detach()
                if not accepted.any():
                    break
                phi_var = phi.clone().requires_grad_(True)
                loss = step_loss(phi_var, eps_cond, target, t)
                if not torch.isfinite(loss).all():
                    raise RuntimeError(f"non-finite inversion loss at step t={t}")
                grad = torch.autograd.grad(loss.sum(), phi_var)[0]
                cur_loss = torch.minimum(cur_loss, loss.detach())
            losses_after[idx] = cur_loss.numpy()

        schedule.append(phi.detach().clone())
        with torch.no_grad():
            k = torch.full((B,), float(sched.tau(t, T)), dtype=xbar.dtype)
            eps_null = unet(xbar, k, schedule[-1])
            eps = eps_null + omega * (eps_cond - eps_null) if omega != 1.0 else eps_cond
            xbar = ddim_step_to_prev(sched, xbar, eps, t, T)
        if progress:
            progress(t, float(losses_after[idx].mean()))

    return schedule, losses_before, losses_after, xbar


def reconstruct(model: DiffusionModel, x_T: torch.Tensor, schedule: list,
                prompt: str, guidance: float = 7.5, steps: int | None = None) -> np.ndarray:
    """DDIM sample from x_T with per-step null embeddings from the schedule."""
    steps = steps or len(schedule)
    if len(schedule) != steps:
        raise ContractError(f"schedule length {len(schedule)} != steps {steps}")
    prompt_emb = model.prompt_tensor(prompt)
    cfg = SamplerConfig(steps=steps, guidance=guidance)
    traj = ddim_sample(model.unet, model.schedule, x_T, prompt_emb, cfg,
                       null_schedule=schedule)
    return to_images(traj.x0)


def invert(model: DiffusionModel, images, prompt: str,
           config: InversionConfig | None = None, progress=None) -> InversionResult:
    """Full inversion: DDIM pivots, null-text optimization, fallback guard."""
    config = config or InversionConfig()
    images = np.asarray(images, dtype=np.float32)
    pivots = ddim_invert(model, images, prompt, steps=config.steps)
    schedule, before, after, _ = null_text_optimize(model, pivots, prompt, config,
                                                    progress=progress)
    B = pivots[0].shape[0]
    base_null = model.null_embedding().unsqueeze(0).repeat(B, 1, 1)
    naive_schedule = [base_null] * config.steps

    recon_opt = reconstruct(model, pivots[-1], schedule, prompt, config.guidance)
    recon_naive = reconstruct(model, pivots[-1], naive_schedule, prompt, config.guidance)
    src = images if images.ndim == 4 else images[None]
    mae_opt = image_mae(recon_opt, src)
    mae_naive = image_mae(recon_naive, src)

    fallback = mae_naive < mae_opt
    if fallback.any():
        for s_opt, s_naive in zip(schedule, naive_schedule):
            mask = torch.from_numpy(fallback)[:, None, None]
            s_opt[mask.expand_as(s_opt)] = s_naive[mask.expand_as(s_naive)]
        recon_opt = np.where(fallback[:, None, None, None], recon_naive, recon_opt)
    final_mae = np.where(fallback, mae_naive, mae_opt)

    return InversionResult(
        pivots=pivots, schedule=schedule,
        losses_before=before, losses_after=after,
        reconstruction=recon_opt, recon_mae=final_mae, naive_mae=mae_naive,
        used_fallback=fallback, prompt=prompt,
        source_hash=source_hash(images, prompt, model), config=config,
    )


def save_inversion(result: InversionResult, path):
    meta = {
        "format": INVERSION_FORMAT,
        "prompt": result.prompt,
        "source_hash": result.source_hash,
        "steps": result.config.steps,
        "guidance": result.config.guidance,
        "inner_iterations": result.config.inner_iterations,
        "learning_rate": result.config.learning_rate,
    }
    arrays = {
        "pivots": torch.stack(result.pivots).numpy(),
        "schedule": torch.stack(result.schedule).numpy(),
        "losses_before": result.losses_before,
        "losses_after": result.losses_after,
        "reconstruction": result.reconstruction,
        "recon_mae": result.recon_mae,
        "naive_mae": result.naive_mae,
        "used_fallback": result.used_fallback.astype(np.float32),
    }
    return save_container(path, meta, arrays)


def load_inversion(path) -> InversionResult:
    meta, arrays = load_container(path)
    if meta.get("format") != INVERSION_FORMAT:
        raise InputError(f"{path} is not an inversion container")
    config = InversionConfig(
        learning_rate=meta["learning_rate"], inner_iterations=meta["inner_iterations"],
        guidance=meta["guidance"], steps=meta["steps"],
    )
    return InversionResult(
        pivots=[torch.from_numpy(p) for p in arrays["pivots"]],
        schedule=[torch.from_numpy(s) for s in arrays["schedule"]],
        losses_before=arrays["losses_before"], losses_after=arrays["losses_after"],
        reconstruction=arrays["reconstruction"], recon_mae=arrays["recon_mae"],
        naive_mae=arrays["naive_mae"],
        used_fallback=arrays["used_fallback"].astype(bool),
        prompt=meta["prompt"], source_hash=meta["source_hash"], config=config,
    )
