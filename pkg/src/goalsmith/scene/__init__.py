from .spec import (
    ENV_IDS,
    EPISODE_LENGTH,
    IMAGE_SIZE,
    WIPE_PARTICLES,
    EnvInfo,
    InputError,
    Observation,
    OracleLeakError,
    SceneSpec,
    forbid_oracle_reward,
)
from .render import render, object_mask, stain_mask, TABLE_COLOR, CUBE_COLOR
from .envs import (
    MOVE_SCALE,
    PUSH_SUCCESS_TOL,
    oracle_goal,
    reset,
    run_scripted_episode,
    scripted_policy,
    step,
)
from .blobs import blob_detect, color_mask
from . import caption as captions
from .caption import ALL_TEMPLATES, caption, target_caption
from .trajectory_io import (
    image_to_png,
    load_trajectory,
    png_to_image,
    save_trajectory,
)

__all__ = [
    "ENV_IDS", "EPISODE_LENGTH", "IMAGE_SIZE", "WIPE_PARTICLES",
    "EnvInfo", "InputError", "Observation", "OracleLeakError", "SceneSpec",
    "forbid_oracle_reward", "render", "object_mask", "stain_mask",
    "TABLE_COLOR", "CUBE_COLOR", "MOVE_SCALE", "PUSH_SUCCESS_TOL",
    "oracle_goal", "reset", "run_scripted_episode", "scripted_policy", "step",
    "blob_detect", "color_mask", "caption", "captions", "target_caption",
    "image_to_png", "load_trajectory", "png_to_image", "save_trajectory",
]
