"""Goal-classifier ensemble: shared pixel encoder, independent heads, mixup
training against recency-restricted replay negatives. The ensemble's mean
positive-class probability is the agent's only reward."""

from __future__ import annotations

import logging

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from ..scene.spec import InputError
from .mixup import mixup_batch
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

FEATURE_DIM = 1024
HEAD_HIDDEN = 1024  # classifier layer sizes [1024, 2]


class PixelEncoder(nn.Module):
    """Small CNN over 64x64x3 frames; shared by critics and classifier heads."""

    def __init__(self, feature_dim: int = FEATURE_DIM):
        super().__init__()
        self.net = nn.Sequential(
            nn.AvgPool2d(4),
            nn.Conv2d(3, 24, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(24, 16, 3, padding=1), nn.ReLU(),
            nn.Flatten(),
        )
        self.feature_dim = feature_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x * 2.0 - 1.0)


def _make_head(feature_dim: int) -> nn.Module:
    return nn.Sequential(
        nn.Linear(feature_dim, HEAD_HIDDEN), nn.ReLU(),
        nn.Linear(HEAD_HIDDEN, 2),
    )


def soft_cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy against soft labels in [0, 1] (class 1 weight)."""
    logp = F.log_softmax(logits, dim=-1)
    return -(labels * logp[:, 1] + (1.0 - labels) * logp[:, 0]).mean()


class EnsembleReward(nn.Module):
    def __init__(self, encoder: PixelEncoder, n_heads: int = 10,
                 mixup_alpha: float = 1.0, lr: float = 1e-4, seed: int = 0):
        super().__init__()
        if n_heads < 1:
            raise InputError("need at least one classifier head")
        self.encoder = encoder
        torch.manual_seed(seed)
        self.heads = nn.ModuleList(
            _make_head(encoder.feature_dim) for _ in range(n_heads))
        self.mixup_alpha = mixup_alpha
        self.lr = lr
        self.opts = [torch.optim.Adam(h.parameters(), lr=lr) for h in self.heads]
        self.rng = np.random.default_rng(seed)
        self._fused = None

    @property
    def n_heads(self) -> int:
        return len(self.heads)

    def _fused_weights(self):
        # heads stacked into two wide GEMMs; rebuilt lazily after training
        if getattr(self, "_fused", None) is None:
            with torch.no_grad():
                w1 = torch.cat([h[0].weight for h in self.heads])        # (n*H, F)
                b1 = torch.cat([h[0].bias for h in self.heads])
                w2 = torch.stack([h[2].weight for h in self.heads])      # (n, 2, H)
                b2 = torch.stack([h[2].bias for h in self.heads])
            self._fused = (w1, b1, w2, b2)
        return self._fused

    def invalidate_fused(self):
        self._fused = None

    def head_probs(self, obs: torch.Tensor) -> torch.Tensor:
        """(n_heads, B) positive-class probabilities."""
        n = self.n_heads
        with torch.no_grad():
            feats = self.encoder(obs)                                    # (B, F)
            w1, b1, w2, b2 = self._fused_weights()
            hidden = torch.relu(feats @ w1.t() + b1)                     # (B, n*H)
            hidden = hidden.reshape(feats.shape[0], n, -1).transpose(0, 1)
            logits = torch.baddbmm(b2.unsqueeze(1), hidden, w2.transpose(1, 2))
            return torch.softmax(logits, dim=-1)[..., 1]                 # (n, B)

    def reward_tensor(self, obs: torch.Tensor) -> torch.Tensor:
        return self.head_probs(obs).mean(dim=0)

    def _reinit_head(self, i: int):
        log.warning("reinitializing classifier head %d after non-finite loss", i)
        self.heads[i] = _make_head(self.encoder.feature_dim)
        self.opts[i] = torch.optim.Adam(self.heads[i].parameters(), lr=self.lr)
        self.invalidate_fused()


def reward(ensemble: EnsembleReward, observation) -> float | np.ndarray:
    """Mean positive-class probability over heads, in [0, 1]."""
    arr = np.asarray(observation, dtype=np.float32)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    obs = torch.from_numpy(arr).permute(0, 3, 1, 2)
    out = ensemble.reward_tensor(obs).numpy()
    return float(out[0]) if single else out


def sample_recent_negatives(buffer: ReplayBuffer, batch: int) -> torch.Tensor:
    return buffer.sample_recent_images(batch)


def train_classifiers(ensemble: EnsembleReward, goal_images: torch.Tensor,
                      buffer: ReplayBuffer, steps: int, batch: int = 128) -> list:
    """Train every head for `steps` gradient steps on freshly drawn,
    independently mixed batches. Returns the per-head mean losses.

    Classifier gradients stop at the encoder: reward shaping must not drift
    the representation the critics are learning on.
    """
    n_goal = goal_images.shape[0]
    losses = []
    for i, (head, opt) in enumerate(zip(ensemble.heads, ensemble.opts)):
        head_losses = []
        for _ in range(steps):
            pos_idx = ensemble.rng.integers(0, n_goal, size=batch)
            pos = goal_images[pos_idx]
            neg = sample_recent_negatives(buffer, batch)
            mixed, labels = mixup_batch(pos, neg, ensemble.mixup_alpha, rng=ensemble.rng)
            with torch.no_grad():
                feats = ensemble.encoder(mixed)
            loss = soft_cross_entropy(head(feats), labels)
            if not torch.isfinite(loss):
                ensemble._reinit_head(i)
                head, opt = ensemble.heads[i], ensemble.opts[i]
                continue
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            head_losses.append(loss.detach().item())
        losses.append(float(np.mean(head_losses)) if head_losses else float("nan"))
    ensemble.invalidate_fused()
    return losses
