"""Denoising training with classifier-free-guidance dropout and EMA weights.

The caption dataset is rendered straight from the scene generator: each
environment contributes layouts in assorted completion states so the model
sees both sides of every editable phrase (markings/nothing, red/green).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .. import scene
from ..scene.spec import InputError
from ..text import NULL_ID, PAD_ID, ids_tensor, tokenize
from .model import DiffusionModel
from .sampler import to_tensor


@dataclass
class TrainConfig:
    steps: int = 6000
    batch: int = 32
    lr: float = 2e-3
    weight_decay: float = 0.0
    ema_decay: float = 0.999
    cfg_drop: float = 0.1
    seed: int = 0
    min_pairs: int = 2000
    log_every: int = 500


def build_caption_dataset(n: int, seed: int = 0):
    """Render n (image, caption) pairs covering all three environments."""
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        env_id = scene.ENV_IDS[i % 3]
        spec, _ = scene.reset(env_id, int(rng.integers(1 << 30)))
        if env_id == "wipe":
            u = rng.random()
            if u < 0.35:
                spec = spec.with_updates(particles=tuple((p, False) for p, _ in spec.particles))
            elif u < 0.55:
                keep = rng.random(len(spec.particles)) < rng.uniform(0.2, 0.9)
                spec = spec.with_updates(
                    particles=tuple((p, bool(k) and a) for (p, a), k in zip(spec.particles, keep))
                )
        elif env_id == "push":
            if rng.random() < 0.30:
                spec = spec.with_updates(cube=spec.target)  # solved layout
        else:
            if rng.random() < 0.5:
                spec = spec.with_updates(led_state="green")
        pairs.append((scene.render(spec).image, scene.caption(spec)))
    return pairs


class _EMA:
    def __init__(self, module, decay):
        self.decay = decay
        self.shadow = {k: v.detach().clone() for k, v in module.state_dict().items()}

    def update(self, module):
        with torch.no_grad():
            for k, v in module.state_dict().items():
                if v.dtype.is_floating_point:
                    self.shadow[k].mul_(self.decay).add_(v, alpha=1 - self.decay)
                else:
                    self.shadow[k] = v.detach().clone()

    def copy_to(self, module):
        module.load_state_dict(self.shadow)


def denoising_loss(model: DiffusionModel, x0: torch.Tensor, ids: torch.Tensor,
                   k: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    """MSE between predicted and true noise at training timesteps k."""
    ab = model.schedule.alpha_bar.to(x0.dtype)[k].reshape(-1, 1, 1, 1)
    x_k = torch.sqrt(ab) * x0 + torch.sqrt(1 - ab) * noise
    emb = model.text_encoder.embed_ids(ids)
    eps = model.unet(x_k, k.to(x0.dtype), emb)
    return torch.mean((eps - noise) ** 2)


def train_diffusion(dataset, config: TrainConfig | None = None,
                    model: DiffusionModel | None = None,
                    enforce_coverage: bool = True, progress=None) -> tuple[DiffusionModel, list]:
    """Train (or fine-tune) the denoiser; returns (model, loss history).

    With enforce_coverage the dataset must hold >= config.min_pairs pairs and
    mention every environment's caption vocabulary; diagnostics (single-pair
    overfit checks) disable it explicitly.
    """
    config = config or TrainConfig()
    if enforce_coverage:
        if len(dataset) < config.min_pairs:
            raise InputError(
                f"dataset has {len(dataset)} pairs; need >= {config.min_pairs}"
            )
        caps = {c for _, c in dataset}
        for needed in ("markings", "cube", "cylinder"):
            if not any(needed in c for c in caps):
                raise InputError(f"dataset captions never mention {needed!r}")

    torch.manual_seed(config.seed)
    if model is None:
        model = DiffusionModel.create(seed=config.seed)
    model.unet.train()
    model.text_encoder.train()

    images = torch.cat([to_tensor(img) for img, _ in dataset])
    ids_all = ids_tensor([c for _, c in dataset])
    null_ids = torch.tensor(tokenize(""), dtype=torch.long)

    params = list(model.unet.parameters()) + list(model.text_encoder.parameters())
    opt = torch.optim.AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=config.steps)
    ema = _EMA(model.unet, config.ema_decay)
    gen = torch.Generator().manual_seed(config.seed)

    t_train = model.schedule.t_train
    losses = []
    for step in range(config.steps):
        idx = torch.randint(0, len(dataset), (config.batch,), generator=gen)
        x0 = images[idx]
        ids = ids_all[idx].clone()
        drop = torch.rand(config.batch, generator=gen) < config.cfg_drop
        if drop.any():
            repl = torch.full_like(ids[drop], PAD_ID)
            repl[:, 0] = NULL_ID
            ids[drop] = repl
        k = torch.randint(1, t_train + 1, (config.batch,), generator=gen)
        noise = torch.randn(x0.shape, generator=gen)

        loss = denoising_loss(model, x0, ids, k, noise)
        if not torch.isfinite(loss):
            raise RuntimeError(
                f"divergent denoising loss at step {step}: {loss.item()!r}"
            )
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        sched.step()
        ema.update(model.unet)
        losses.append(loss.detach().item())
        if progress and (step % config.log_every == 0 or step == config.steps - 1):
            progress(step, losses[-1])

    ema.copy_to(model.unet)
    model.unet.eval()
    model.text_encoder.eval()
    return model, losses
