"""Pixel actor-critic in the TD3 mold: twin critics, delayed policy updates,
target smoothing, random-crop augmentation, shared encoder updated only by
the critic loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .augment import random_crop_augment
from .ensemble import FEATURE_DIM, PixelEncoder


@dataclass
class RLConfig:
    batch: int = 128
    ensemble: int = 10
    mixup_alpha: float = 1.0
    recency: float = 0.05
    cls_interval: int = 1000
    cls_steps: int = 10
    goal_count: int = 1024
    total_steps: int = 200_000
    warmup: int = 2000
    pad: int = 4
    gamma: float = 0.99
    n_step: int = 3
    lr: float = 3e-4
    cls_lr: float = 1e-4
    tau: float = 0.01
    hidden: int = 256
    trunk: int = 50
    stddev_start: float = 1.0
    stddev_end: float = 0.1
    stddev_steps: int = 100_000
    stddev_clip: float = 0.3
    actor_delay: int = 2
    episode_len: int = 200
    capacity: int | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("batch", "ensemble", "cls_interval", "cls_steps",
                     "goal_count", "episode_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")

    def stddev_at(self, step: int) -> float:
        frac = min(1.0, step / max(self.stddev_steps, 1))
        return self.stddev_start + (self.stddev_end - self.stddev_start) * frac


class Actor(nn.Module):
    def __init__(self, feature_dim=FEATURE_DIM, trunk=50, hidden=256, action_dim=2):
        super().__init__()
        self.trunk = nn.Sequential(nn.Linear(feature_dim, trunk),
                                   nn.LayerNorm(trunk), nn.Tanh())
        self.policy = nn.Sequential(
            nn.Linear(trunk, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, action_dim))

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.policy(self.trunk(feats)))


class TwinCritic(nn.Module):
    def __init__(self, feature_dim=FEATURE_DIM, trunk=50, hidden=256, action_dim=2):
        super().__init__()
        self.trunk = nn.Sequential(nn.Linear(feature_dim, trunk),
                                   nn.LayerNorm(trunk), nn.Tanh())
        def q_net():
            return nn.Sequential(
                nn.Linear(trunk + action_dim, hidden), nn.ReLU(),
                nn.Linear(hidden, hidden), nn.ReLU(),
                nn.Linear(hidden, 1))
        self.q1 = q_net()
        self.q2 = q_net()

    def forward(self, feats, action):
        h = torch.cat([self.trunk(feats), action], dim=-1)
        return self.q1(h).squeeze(-1), self.q2(h).squeeze(-1)


class DrQAgent:
    def __init__(self, config: RLConfig, seed: int | None = None):
        self.config = config
        torch.manual_seed(config.seed if seed is None else seed)
        self.encoder = PixelEncoder()
        self.actor = Actor(self.encoder.feature_dim, config.trunk, config.hidden)
        self.critic = TwinCritic(self.encoder.feature_dim, config.trunk, config.hidden)
        self.critic_target = TwinCritic(self.encoder.feature_dim, config.trunk, config.hidden)
        self.critic_target.load_state_dict(self.critic.state_dict())
        self.encoder_opt = torch.optim.Adam(self.encoder.parameters(), lr=config.lr)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=config.lr)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=config.lr)
        self.gen = torch.Generator().manual_seed(config.seed if seed is None else seed)
        self.updates = 0

    def act(self, obs: np.ndarray, stddev: float = 0.0) -> np.ndarray:
        x = torch.from_numpy(np.asarray(obs, dtype=np.float32))[None].permute(0, 3, 1, 2)
        with torch.no_grad():
            a = self.actor(self.encoder(x))[0]
        if stddev > 0:
            a = a + stddev * torch.randn(a.shape, generator=self.gen)
        return a.clamp(-1.0, 1.0).numpy()

    def update(self, buffer, step: int) -> dict:
        cfg = self.config
        s, a, r, s_n, discount = buffer.sample_transitions(
            cfg.batch, n_step=cfg.n_step, gamma=cfg.gamma)
        s = random_crop_augment(s, cfg.pad, self.gen)
        s_n = random_crop_augment(s_n, cfg.pad, self.gen)

        stddev = cfg.stddev_at(step)
        with torch.no_grad():
            h_n = self.encoder(s_n)
            noise = (stddev * torch.randn(a.shape, generator=self.gen)
                     ).clamp(-cfg.stddev_clip, cfg.stddev_clip)
            a_n = (self.actor(h_n) + noise).clamp(-1.0, 1.0)
            q1_t, q2_t = self.critic_target(h_n, a_n)
            target = r + discount * torch.min(q1_t, q2_t)

        h = self.encoder(s)
        q1, q2 = self.critic(h, a)
        critic_loss = F.mse_loss(q1, target) + F.mse_loss(q2, target)
        if not torch.isfinite(critic_loss):
            raise RuntimeError(f"non-finite critic loss at step {step}")
        self.encoder_opt.zero_grad(set_to_none=True)
        self.critic_opt.zero_grad(set_to_none=True)
        critic_loss.backward()
        self.encoder_opt.step()
        self.critic_opt.step()

        metrics = {"critic_loss": critic_loss.detach().item()}
        self.updates += 1
        if self.updates % cfg.actor_delay == 0:
            h_d = h.detach()
            pi = self.actor(h_d)
            q1_pi, q2_pi = self.critic(h_d, pi)
            actor_loss = -torch.min(q1_pi, q2_pi).mean()
            self.actor_opt.zero_grad(set_to_none=True)
            actor_loss.backward()
            self.actor_opt.step()
            metrics["actor_loss"] = actor_loss.detach().item()
            with torch.no_grad():
                for p, tp in zip(self.critic.parameters(), self.critic_target.parameters()):
                    tp.mul_(1 - cfg.tau).add_(cfg.tau * p)
        return metrics

    def state_arrays(self) -> dict:
        arrays = {}
        for name, module in (("encoder", self.encoder), ("actor", self.actor),
                             ("critic", self.critic), ("critic_target", self.critic_target)):
            for k, v in module.state_dict().items():
                arrays[f"{name}.{k}"] = v.numpy()
        return arrays

    def load_state_arrays(self, arrays: dict):
        for name, module in (("encoder", self.encoder), ("actor", self.actor),
                             ("critic", self.critic), ("critic_target", self.critic_target)):
            sd = {k[len(name) + 1:]: torch.from_numpy(v) for k, v in arrays.items()
                  if k.startswith(name + ".")}
            module.load_state_dict(sd)
