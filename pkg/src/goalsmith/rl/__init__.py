from .agent import Actor, DrQAgent, RLConfig, TwinCritic
from .augment import random_crop_augment
from .ensemble import (
    FEATURE_DIM,
    EnsembleReward,
    PixelEncoder,
    reward,
    sample_recent_negatives,
    soft_cross_entropy,
    train_classifiers,
)
from .mixup import mixup_batch
from .replay import ReplayBuffer, RetryableError
from .train import (
    RLRunResult,
    evaluate_agent,
    load_agent,
    rl_train,
    save_agent,
)

__all__ = [
    "Actor", "DrQAgent", "RLConfig", "TwinCritic", "random_crop_augment",
    "FEATURE_DIM", "EnsembleReward", "PixelEncoder", "reward",
    "sample_recent_negatives", "soft_cross_entropy", "train_classifiers",
    "mixup_batch", "ReplayBuffer", "RetryableError",
    "RLRunResult", "evaluate_agent", "load_agent", "rl_train", "save_agent",
]
