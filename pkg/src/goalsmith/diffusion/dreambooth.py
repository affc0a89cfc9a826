"""Feature-token fine-tuning with prior preservation.

A copy of the model is trained on instance images under a prompt carrying the
reserved "sks" token, mixed with a prior-preservation term over class images
sampled from the frozen base model, so the class prompt keeps its meaning.
Only the U-Net and the sks embedding row receive gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..scene.spec import InputError
from ..text import SKS_ID, ids_tensor
from .model import DiffusionModel, FeatureToken
from .sampler import SamplerConfig, ddim_sample, to_images, to_tensor
from .train import denoising_loss


@dataclass
class FinetuneConfig:
    instance_prompt: str = "a photo of a sks cube"
    steps: int = 800
    lr: float = 5e-6
    class_images: int = 200
    prior_weight: float = 1.0
    batch: int = 8
    seed: int = 0


def generate_class_images(model: DiffusionModel, class_prompt: str, count: int,
                          seed: int = 0, batch: int = 32) -> torch.Tensor:
    """Sample prior-preservation images from the frozen base checkpoint."""
    prompt_emb = model.prompt_tensor(class_prompt)
    null_emb = model.null_embedding()
    gen = torch.Generator().manual_seed(seed)
    config = SamplerConfig(steps=model.sampler.steps, guidance=model.sampler.guidance)
    out = []
    done = 0
    while done < count:
        b = min(batch, count - done)
        x_T = torch.randn((b, 3, model.unet.image_size, model.unet.image_size), generator=gen)
        traj = ddim_sample(model.unet, model.schedule, x_T, prompt_emb, config,
                           null_emb=null_emb)
        out.append(traj.x0.clamp(-1, 1))
        done += b
    return torch.cat(out)


def fine_tune_feature_token(model: DiffusionModel, instance_images, class_prompt: str,
                            config: FinetuneConfig | None = None,
                            class_tensor: torch.Tensor | None = None,
                            progress=None) -> tuple[DiffusionModel, FeatureToken]:
    """DreamBooth-style specialization of the sks token.

    instance_images: list/array of (H, W, 3) float images in [0, 1].
    """
    config = config or FinetuneConfig()
    if len(instance_images) < 2:
        raise InputError(f"need at least 2 instance images, got {len(instance_images)}")
    if "sks" not in config.instance_prompt.split():
        raise InputError("instance prompt must contain the sks token")
    if "sks" in class_prompt.split():
        raise InputError("class prompt must not contain the sks token")

    tuned = model.clone()
    tuned.unet.train()
    if class_tensor is None:
        class_tensor = generate_class_images(
            model, class_prompt, config.class_images, seed=config.seed)
    elif len(class_tensor) < config.class_images:
        raise InputError("class tensor smaller than configured class_images")

    inst = to_tensor(instance_images)
    inst_ids = ids_tensor([config.instance_prompt] * 1)
    class_ids = ids_tensor([class_prompt] * 1)

    # gradients flow to the U-Net and to the sks embedding row only
    emb_table = tuned.text_encoder.table.weight
    emb_table.requires_grad_(True)
    sks_mask = torch.zeros_like(emb_table)
    sks_mask[SKS_ID] = 1.0
    params = list(tuned.unet.parameters()) + [emb_table]
    opt = torch.optim.AdamW(params, lr=config.lr)
    gen = torch.Generator().manual_seed(config.seed)
    t_train = tuned.schedule.t_train

    losses = []
    for step in range(config.steps):
        i_idx = torch.randint(0, len(inst), (config.batch,), generator=gen)
        c_idx = torch.randint(0, len(class_tensor), (config.batch,), generator=gen)
        k = torch.randint(1, t_train + 1, (2 * config.batch,), generator=gen)
        noise = torch.randn((2 * config.batch, *inst.shape[1:]), generator=gen)

        l_inst = denoising_loss(
            tuned, inst[i_idx], inst_ids.expand(config.batch, -1),
            k[: config.batch], noise[: config.batch])
        l_prior = denoising_loss(
            tuned, class_tensor[c_idx], class_ids.expand(config.batch, -1),
            k[config.batch :], noise[config.batch :])
        loss = l_inst + config.prior_weight * l_prior
        if not torch.isfinite(loss):
            raise RuntimeError(f"divergent fine-tune loss at step {step}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        if emb_table.grad is not None:
            emb_table.grad *= sks_mask
        opt.step()
        losses.append(loss.detach().item())
        if progress and step % 100 == 0:
            progress(step, float(loss))

    tuned.unet.eval()
    tuned.text_encoder.table.weight.requires_grad_(False)
    token = FeatureToken(token_id=SKS_ID)
    tuned.finetune_losses = losses
    return tuned, token
