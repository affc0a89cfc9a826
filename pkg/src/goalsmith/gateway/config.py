"""Project configuration and the named task presets.

Presets carry the published per-task editing and fine-tuning configurations
(prompts, budgets, bounding box, token set, instance counts) plus the
example-based RL hyperparameters, so a run needs only a preset name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..editing.specs import AppearanceEdit, StructureEdit, edit_from_dict
from ..rl.agent import RLConfig
from ..scene import captions
from ..scene.spec import InputError
from ..text import trailing_indices

# cube word tokens (sks, cube) plus the trailing pads after the 13-word sentence
PUSH_TOKENS = tuple([4, 5] + trailing_indices(captions.PUSH))

PRESETS = {
    "wipe_sim": {
        "env_id": "wipe",
        "edit": AppearanceEdit(
            source_prompt=captions.WIPE_DIRTY,
            target_prompt=captions.WIPE_CLEAN,
            cross_steps=40, self_steps=0),
        "dreambooth": True,
        "finetune": {"instance_count": 20,
                     "class_prompt": captions.CLASS_PROMPT_GRIPPER,
                     "class_images": 200, "steps": 800, "lr": 5e-6},
    },
    "led_sim": {
        "env_id": "led",
        "edit": AppearanceEdit(
            source_prompt=captions.LED_RED,
            target_prompt=captions.LED_GREEN,
            cross_steps=40, self_steps=50),
        "dreambooth": False,
        "finetune": None,
    },
    "push_sim": {
        "env_id": "push",
        "edit": StructureEdit(
            prompt=captions.PUSH,
            box=(0.5, 0.7, 0.7, 0.9),
            tokens=PUSH_TOKENS,
            steps=10),
        "dreambooth": True,
        "finetune": {"instance_count": 11,
                     "class_prompt": captions.CLASS_PROMPT_CUBE,
                     "class_images": 200, "steps": 800, "lr": 5e-6},
    },
}

RL_DEFAULTS = dict(
    batch=128, mixup_alpha=1.0, ensemble=10, recency=0.05,
    cls_interval=1000, cls_steps=10, goal_count=1024, total_steps=200_000,
)

_ALLOWED_KEYS = {"data_root", "checkpoints", "sampler", "rl", "queue_size", "port"}
_ALLOWED_CHECKPOINT_KEYS = {"base", "sks"}
_ALLOWED_SAMPLER_KEYS = {"steps", "guidance"}


@dataclass
class ProjectConfig:
    data_root: Path
    checkpoints: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=lambda: {"steps": 50, "guidance": 7.5})
    rl: dict = field(default_factory=dict)
    queue_size: int = 32
    port: int = 8800

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "ProjectConfig":
        unknown = set(raw) - _ALLOWED_KEYS
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        ckpt = raw.get("checkpoints", {})
        if set(ckpt) - _ALLOWED_CHECKPOINT_KEYS:
            raise InputError("unknown checkpoint keys")
        sampler = {"steps": 50, "guidance": 7.5}
        sampler.update(raw.get("sampler", {}))
        if set(sampler) - _ALLOWED_SAMPLER_KEYS:
            raise InputError("unknown sampler keys")
        rl = dict(RL_DEFAULTS)
        rl.update(raw.get("rl", {}))
        try:
            RLConfig(**{k: v for k, v in rl.items() if k in vars(RLConfig()) or True})
        except TypeError as exc:
            raise InputError(f"bad rl config: {exc}") from exc
        root = Path(raw.get("data_root", "artifacts"))
        if base_dir is not None and not root.is_absolute():
            root = base_dir / root
        return cls(data_root=root, checkpoints=ckpt, sampler=sampler, rl=rl,
                   queue_size=int(raw.get("queue_size", 32)),
                   port=int(raw.get("port", 8800)))

    @classmethod
    def load(cls, path) -> "ProjectConfig":
        path = Path(path)
        raw = yaml.safe_load(path.read_text()) or {}
        return cls.from_dict(raw, base_dir=path.parent)

    def rl_config(self, **overrides) -> RLConfig:
        merged = dict(self.rl)
        merged.update(overrides)
        return RLConfig(**merged)


def default_config() -> ProjectConfig:
    from ..pipeline import data_root

    return ProjectConfig.from_dict({"data_root": str(data_root())})


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise InputError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return PRESETS[name]
