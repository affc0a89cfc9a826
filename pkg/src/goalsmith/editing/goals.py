"""Goal-image generation: two lockstep diffusion processes sharing the
inverted noise and per-step null-text schedule, with attention control on the
target process for the first N steps and a conventional free run after.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .. import scene
from ..diffusion.model import DiffusionModel
from ..diffusion.sampler import AttentionRecord, SamplerConfig, ddim_step_to_prev, guided_eps, to_images
from ..inversion import InversionConfig, InversionResult, invert, source_hash
from ..scene.spec import InputError
from ..scene.trajectory_io import image_to_png
from .controllers import EditController, SourceRecorder
from .specs import AppearanceEdit, StructureEdit, edit_from_dict

VIZ_TIMESTEPS = (50, 40, 30, 20, 10, 0)


class PreconditionError(RuntimeError):
    pass


class DatasetRejected(RuntimeError):
    pass


@dataclass
class GoalResult:
    images: np.ndarray                  # (B, H, W, 3) in [0, 1]
    source_attention: AttentionRecord
    target_attention: AttentionRecord


def _check_inversion(x_src, edit, inversion: InversionResult, model: DiffusionModel):
    if inversion is None:
        raise PreconditionError("no inversion supplied for this source image")
    expect = source_hash(np.asarray(x_src, dtype=np.float32), edit.source_prompt, model)
    if inversion.source_hash != expect:
        raise PreconditionError(
            "inversion cache does not match this (image, prompt, checkpoint)")


def run_edit_processes(model: DiffusionModel, x_T: torch.Tensor, schedule: list,
                       edit, guidance: float = 7.5,
                       keep_steps=()) -> GoalResult:
    """Run the source and target processes in lockstep and return the target x_0."""
    T = len(schedule)
    keep = {T if t in (0, T) else t for t in keep_steps} | ({1} if 0 in keep_steps else set())
    src_emb = model.prompt_tensor(edit.source_prompt)
    if isinstance(edit, AppearanceEdit):
        tgt_emb = model.prompt_tensor(edit.target_prompt)
    else:
        tgt_emb = src_emb
    record_self = getattr(edit, "self_steps", 0) > 0
    recorder = SourceRecorder(keep_steps=keep, record_self=record_self)
    controller = EditController(recorder, edit, T, keep_steps=keep)

    x_src = x_T
    x_tgt = x_T.clone()
    with torch.no_grad():
        for t in range(T, 0, -1):
            null_t = schedule[T - t]
            eps_s = guided_eps(model.unet, model.schedule, x_src, t, T,
                               src_emb, null_t, guidance, recorder)
            x_src = ddim_step_to_prev(model.schedule, x_src, eps_s, t, T)
            eps_t = guided_eps(model.unet, model.schedule, x_tgt, t, T,
                               tgt_emb, null_t, guidance, controller)
            x_tgt = ddim_step_to_prev(model.schedule, x_tgt, eps_t, t, T)
    return GoalResult(images=to_images(x_tgt),
                      source_attention=recorder.record,
                      target_attention=controller.record)


def generate_goal(model: DiffusionModel, x_src, edit,
                  inversion: InversionResult, record_attention: bool = False) -> GoalResult:
    """Edit one source image (or a batch) into its goal image."""
    _check_inversion(x_src, edit, inversion, model)
    keep = VIZ_TIMESTEPS if record_attention else ()
    return run_edit_processes(model, inversion.x_T, inversion.schedule, edit,
                              guidance=inversion.config.guidance, keep_steps=keep)


@dataclass
class GoalDataset:
    root: Path
    entries: list

    @property
    def images(self) -> np.ndarray:
        ok = [e for e in self.entries if not e.get("failed")]
        return np.stack([
            scene.png_to_image(self.root / e["file"]) for e in ok
        ])

    @property
    def failure_fraction(self) -> float:
        return sum(1 for e in self.entries if e.get("failed")) / max(len(self.entries), 1)

    @classmethod
    def load(cls, root) -> "GoalDataset":
        root = Path(root)
        entries = [json.loads(line) for line in
                   (root / "manifest.jsonl").read_text().splitlines() if line]
        return cls(root=root, entries=entries)


def generate_goal_dataset(model: DiffusionModel, env_id: str, edit, count: int,
                          out_dir, seed_base: int = 0, batch: int = 32,
                          inversion_config: InversionConfig | None = None,
                          progress=None) -> GoalDataset:
    """Reset the environment `count` times, edit each initial observation, and
    store the goal images with provenance. Per-image failures are recorded;
    the dataset is rejected outright above a 20% failure rate."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    inversion_config = inversion_config or InversionConfig()
    entries = []
    done = 0
    while done < count:
        b = min(batch, count - done)
        seeds = [seed_base + done + i for i in range(b)]
        specs, images = [], []
        for s in seeds:
            spec, obs = scene.reset(env_id, s)
            specs.append(spec)
            images.append(obs.image)
        images = np.stack(images)
        try:
            inv = invert(model, images, edit.source_prompt, inversion_config)
            result = run_edit_processes(model, inv.x_T, inv.schedule, edit,
                                        guidance=inversion_config.guidance)
            goals = result.images
            if not np.isfinite(goals).all():
                raise RuntimeError("non-finite goal images")
            for j, s in enumerate(seeds):
                fname = f"images/{done + j:05d}.png"
                image_to_png(goals[j], out_dir / fname)
                entries.append({
                    "index": done + j, "seed": s, "env_id": env_id, "file": fname,
                    "edit": edit.to_dict(),
                    "scene_spec": specs[j].to_json(),
                    "image_sha256": hashlib.sha256(
                        np.ascontiguousarray(goals[j]).tobytes()).hexdigest(),
                    "inversion_mae": float(inv.recon_mae[j]),
                    "inversion_final_loss": float(inv.losses_after[:, j].mean()),
                    "failed": False,
                })
        except Exception as exc:  # record the whole batch as failed, keep going
            for j, s in enumerate(seeds):
                entries.append({
                    "index": done + j, "seed": s, "env_id": env_id, "file": None,
                    "edit": edit.to_dict(), "failed": True, "error": str(exc),
                })
        done += b
        if progress:
            progress(done, count)

    with open(out_dir / "manifest.jsonl", "w") as fh:
        for e in entries:
            fh.write(json.dumps(e) + "\n")
    ds = GoalDataset(root=out_dir, entries=entries)
    if ds.failure_fraction > 0.20:
        raise DatasetRejected(
            f"{ds.failure_fraction:.0%} of edits failed (limit 20%)")
    return ds


def oracle_goal_dataset(env_id: str, count: int, out_dir, seed_base: int = 0) -> GoalDataset:
    """Real-goal upper bound: render the solved state of each reset layout."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(count):
        spec, _ = scene.reset(env_id, seed_base + i)
        goal = scene.oracle_goal(env_id, spec)
        fname = f"images/{i:05d}.png"
        image_to_png(goal.image, out_dir / fname)
        entries.append({
            "index": i, "seed": seed_base + i, "env_id": env_id, "file": fname,
            "edit": {"kind": "oracle"}, "scene_spec": spec.to_json(),
            "image_sha256": hashlib.sha256(
                np.ascontiguousarray(goal.image).tobytes()).hexdigest(),
            "failed": False,
        })
    with open(out_dir / "manifest.jsonl", "w") as fh:
        for e in entries:
            fh.write(json.dumps(e) + "\n")
    return GoalDataset(root=out_dir, entries=entries)
