"""Model bundle: U-Net + text encoder + schedule, with single-file checkpoints.

Checkpoints hold a JSON header (architecture, schedule, vocabulary) plus raw
float32 weight blobs, and are immutable once written. Sampling over a loaded
bundle is reentrant; training always works on its own copy.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import torch

from ..io.container import array_hash, load_container, save_container
from ..scene.spec import InputError
from ..text import D_TEXT, PROMPT_LEN, VOCAB, PromptEmbedding, TextEncoder, tokenize
from .schedule import NoiseSchedule
from .sampler import SamplerConfig
from .unet import UNet

FORMAT = "goalsmith-diffusion-v1"


@dataclass
class FeatureToken:
    token_id: int
    checkpoint_ref: str | None = None


class DiffusionModel:
    def __init__(self, unet: UNet, text_encoder: TextEncoder,
                 schedule: NoiseSchedule, sampler: SamplerConfig | None = None):
        self.unet = unet
        self.text_encoder = text_encoder
        self.schedule = schedule
        self.sampler = sampler or SamplerConfig()
        self.unet.eval()
        self.text_encoder.eval()

    @classmethod
    def create(cls, channels=(8, 16, 32, 48), schedule_kind="cosine",
               t_train=1000, d_attn=32, seed=0, image_size=64) -> "DiffusionModel":
        torch.manual_seed(seed)
        unet = UNet(channels=channels, d_attn=d_attn, image_size=image_size)
        enc = TextEncoder()
        sched = NoiseSchedule(kind=schedule_kind, t_train=t_train)
        return cls(unet, enc, sched)

    def encode_prompt(self, text: str) -> PromptEmbedding:
        return self.text_encoder.encode_prompt(text)

    def prompt_tensor(self, text: str) -> torch.Tensor:
        return self.encode_prompt(text).embedding

    def null_embedding(self) -> torch.Tensor:
        return self.prompt_tensor("")

    def weights_hash(self) -> str:
        arrays = [p.detach().cpu().numpy() for p in self.unet.state_dict().values()]
        arrays += [p.detach().cpu().numpy() for p in self.text_encoder.state_dict().values()]
        return array_hash(*arrays)

    def clone(self) -> "DiffusionModel":
        return DiffusionModel(
            copy.deepcopy(self.unet), copy.deepcopy(self.text_encoder),
            NoiseSchedule.from_meta(self.schedule.to_meta()),
            SamplerConfig(self.sampler.steps, self.sampler.guidance),
        )

    def save(self, path, extra_meta: dict | None = None):
        meta = {
            "format": FORMAT,
            "arch": {
                "channels": list(self.unet.channels),
                "d_attn": self.unet.attn_mid.d_attn,
                "t_dim": self.unet.t_dim,
                "image_size": self.unet.image_size,
            },
            "schedule": self.schedule.to_meta(),
            "sampler": {"steps": self.sampler.steps, "guidance": self.sampler.guidance},
            "vocab": VOCAB,
            "prompt_len": PROMPT_LEN,
            "d_text": D_TEXT,
        }
        if extra_meta:
            meta.update(extra_meta)
        arrays = {}
        for key, value in self.unet.state_dict().items():
            arrays[f"unet.{key}"] = value.cpu().numpy()
        for key, value in self.text_encoder.state_dict().items():
            arrays[f"text.{key}"] = value.cpu().numpy()
        return save_container(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "DiffusionModel":
        meta, arrays = load_container(path)
        if meta.get("format") != FORMAT:
            raise InputError(f"{path} is not a diffusion checkpoint")
        if meta["vocab"] != VOCAB:
            raise InputError("checkpoint vocabulary does not match this build")
        arch = meta["arch"]
        unet = UNet(channels=tuple(arch["channels"]), d_attn=arch["d_attn"],
                    t_dim=arch["t_dim"], image_size=arch.get("image_size", 64))
        enc = TextEncoder()
        unet.load_state_dict({k[5:]: torch.from_numpy(v) for k, v in arrays.items()
                              if k.startswith("unet.")})
        enc.load_state_dict({k[5:]: torch.from_numpy(v) for k, v in arrays.items()
                             if k.startswith("text.")})
        sched = NoiseSchedule.from_meta(meta["schedule"])
        sampler = SamplerConfig(**meta["sampler"])
        model = cls(unet, enc, sched, sampler)
        model.meta = meta
        return model


def validate_prompt(text: str):
    tokenize(text)
