from .schedule import NoiseSchedule
from .unet import UNet, CROSS_LAYERS, SELF_LAYERS
from .sampler import (
    AttentionRecord,
    ContractError,
    DiffusionTrajectory,
    RecordingController,
    SamplerConfig,
    ddim_sample,
    ddim_step_to_next,
    ddim_step_to_prev,
    denoise_step,
    guided_eps,
    to_images,
    to_tensor,
)
from .model import DiffusionModel, FeatureToken
from .train import TrainConfig, build_caption_dataset, denoising_loss, train_diffusion
from .dreambooth import FinetuneConfig, fine_tune_feature_token, generate_class_images
from .probe import SceneProbe, default_probe

__all__ = [
    "NoiseSchedule", "UNet", "CROSS_LAYERS", "SELF_LAYERS",
    "AttentionRecord", "ContractError", "DiffusionTrajectory",
    "RecordingController", "SamplerConfig", "ddim_sample",
    "ddim_step_to_next", "ddim_step_to_prev", "denoise_step", "guided_eps",
    "to_images", "to_tensor", "DiffusionModel", "FeatureToken",
    "TrainConfig", "build_caption_dataset", "denoising_loss", "train_diffusion",
    "FinetuneConfig", "fine_tune_feature_token", "generate_class_images",
    "SceneProbe", "default_probe",
]
