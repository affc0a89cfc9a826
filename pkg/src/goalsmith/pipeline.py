"""Build-or-load recipes for the heavyweight artifacts (trained checkpoints,
fine-tuned checkpoints, goal datasets), cached under the data root.

Every recipe is deterministic given its seed, so cached artifacts are
reproducible; delete the data root to rebuild from scratch.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import torch

from . import scene
from .diffusion import (
    DiffusionModel,
    FinetuneConfig,
    TrainConfig,
    build_caption_dataset,
    fine_tune_feature_token,
    train_diffusion,
)

REPO_ROOT = Path(__file__).resolve().parents[2]


def data_root() -> Path:
    root = Path(os.environ.get("GOALSMITH_DATA", REPO_ROOT / "artifacts"))
    root.mkdir(parents=True, exist_ok=True)
    return root


BASE_TRAIN = TrainConfig(steps=6000, batch=32, lr=2e-3, seed=0)
BASE_DATASET_SIZE = 3000
FINETUNE = FinetuneConfig(
    instance_prompt="a photo of a sks cube",
    steps=800, lr=5e-6, class_images=200, seed=0,
)
PUSH_INSTANCE_COUNT = 11  # instance images for the sim push task


def base_checkpoint_path() -> Path:
    return data_root() / "diffusion_base.ckpt"


def sks_checkpoint_path() -> Path:
    return data_root() / "diffusion_sks.ckpt"


def base_model(force: bool = False, progress=None) -> DiffusionModel:
    path = base_checkpoint_path()
    if path.exists() and not force:
        return DiffusionModel.load(path)
    pairs = build_caption_dataset(BASE_DATASET_SIZE, seed=0)
    model, losses = train_diffusion(pairs, BASE_TRAIN, progress=progress)
    model.save(path, extra_meta={"train": {"steps": BASE_TRAIN.steps,
                                           "dataset_size": len(pairs),
                                           "final_loss": float(np.mean(losses[-100:]))}})
    return model


def push_instance_images(count: int = PUSH_INSTANCE_COUNT) -> np.ndarray:
    """Renders of cube scenes used as feature-token instance images."""
    images = []
    for seed in range(count):
        spec, obs = scene.reset("push", 500_000 + seed)
        images.append(obs.image)
    return np.stack(images)


def sks_model(force: bool = False, progress=None) -> DiffusionModel:
    path = sks_checkpoint_path()
    if path.exists() and not force:
        return DiffusionModel.load(path)
    base = base_model()
    instances = push_instance_images()
    tuned, token = fine_tune_feature_token(
        base, instances, scene.captions.CLASS_PROMPT_CUBE, FINETUNE, progress=progress)
    tuned.save(path, extra_meta={"feature_token": token.token_id,
                                 "instance_count": len(instances)})
    return tuned


def scene_batch(env_id: str, seeds) -> tuple[list, np.ndarray]:
    specs, images = [], []
    for s in seeds:
        spec, obs = scene.reset(env_id, int(s))
        specs.append(spec)
        images.append(obs.image)
    return specs, np.stack(images)
