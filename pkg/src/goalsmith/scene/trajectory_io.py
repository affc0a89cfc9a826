"""On-disk trajectory format: a directory of PNG frames plus a JSON manifest."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .spec import EnvInfo


def image_to_png(image: np.ndarray, path) -> None:
    arr = np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def png_to_image(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
    return arr / 255.0


def save_trajectory(dirpath, env_id: str, seed: int, frames, actions, infos) -> Path:
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        image_to_png(frame, dirpath / f"{i:05d}.png")
    manifest = {
        "env_id": env_id,
        "seed": seed,
        "frame_count": len(frames),
        "actions": [list(map(float, a)) for a in actions],
        "env_info": [info.to_dict() for info in infos],
    }
    (dirpath / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return dirpath


def load_trajectory(dirpath):
    dirpath = Path(dirpath)
    manifest = json.loads((dirpath / "manifest.json").read_text())
    frames = [
        png_to_image(dirpath / f"{i:05d}.png") for i in range(manifest["frame_count"])
    ]
    actions = [np.asarray(a) for a in manifest["actions"]]
    infos = [EnvInfo.from_dict(d) for d in manifest["env_info"]]
    return manifest["env_id"], manifest["seed"], frames, actions, infos
