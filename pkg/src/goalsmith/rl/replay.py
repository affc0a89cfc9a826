"""Ring replay buffer with single-copy observation storage and a
recency-restricted sampling window for classifier negatives.

Observations are stored once as uint8; a transition references consecutive
entries of the same episode, so s' costs no extra memory. The recency window
covers the newest ceil(lambda * size) entries, clamped to at least one batch
so early training stays feasible.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from ..scene.spec import InputError

RECENCY_DEFAULT = 0.05


class RetryableError(RuntimeError):
    """Not enough data yet; try again after more environment steps."""


class ReplayBuffer:
    def __init__(self, capacity: int, obs_shape=(64, 64, 3), action_dim: int = 2,
                 recency: float = RECENCY_DEFAULT, seed: int = 0):
        if not (0.0 < recency <= 1.0):
            raise InputError("recency fraction must be in (0, 1]")
        self.capacity = int(capacity)
        self.recency = float(recency)
        self.obs = np.zeros((self.capacity, *obs_shape), dtype=np.uint8)
        self.action = np.zeros((self.capacity, action_dim), dtype=np.float32)
        self.reward = np.zeros(self.capacity, dtype=np.float32)
        self.episode = np.full(self.capacity, -1, dtype=np.int64)
        self.count = 0  # monotone entry counter; slot = index % capacity
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return min(self.count, self.capacity)

    @property
    def size(self) -> int:
        return len(self)

    def _slot(self, index):
        return index % self.capacity

    def add(self, obs, episode_id: int, action=None, reward: float = 0.0):
        """Append one observation; action/reward describe the transition that
        starts at this entry (unset for an episode's final observation)."""
        s = self._slot(self.count)
        self.obs[s] = np.clip(np.asarray(obs) * 255.0 + 0.5, 0, 255).astype(np.uint8)
        self.episode[s] = episode_id
        if action is not None:
            self.action[s] = action
        self.reward[s] = reward
        self.count += 1

    def set_transition(self, index: int, action, reward: float):
        self.action[self._slot(index)] = action
        self.reward[self._slot(index)] = reward

    @property
    def last_index(self) -> int:
        return self.count - 1

    def _obs_float(self, slots) -> torch.Tensor:
        arr = self.obs[slots].astype(np.float32) / 255.0
        return torch.from_numpy(arr).permute(0, 3, 1, 2)

    def recent_window(self) -> int:
        w = math.ceil(self.recency * len(self))
        return min(len(self), max(w, 1))

    def sample_recent_images(self, batch: int) -> torch.Tensor:
        """Uniform draw of observations restricted to the newest window."""
        if len(self) < batch:
            raise RetryableError(f"buffer holds {len(self)} entries; need {batch}")
        w = max(self.recent_window(), batch)
        lo = self.count - w
        idx = self.rng.integers(lo, self.count, size=batch)
        return self._obs_float(self._slot(idx))

    def recent_index_range(self) -> tuple:
        w = max(self.recent_window(), 1)
        return self.count - w, self.count

    def sample_transitions(self, batch: int, n_step: int = 1, gamma: float = 0.99):
        """(s, a, n-step reward, s_n, discount) with boundaries respected."""
        lo = max(0, self.count - self.capacity)
        hi = self.count - n_step
        if hi <= lo:
            raise RetryableError("not enough transitions for sampling")
        picked = np.empty(batch, dtype=np.int64)
        got = 0
        while got < batch:
            cand = self.rng.integers(lo, hi, size=batch - got)
            ok = self.episode[self._slot(cand)] == self.episode[self._slot(cand + n_step)]
            sel = cand[ok]
            picked[got : got + len(sel)] = sel
            got += len(sel)
        rew = np.zeros(batch, dtype=np.float32)
        for j in range(n_step):
            rew += (gamma**j) * self.reward[self._slot(picked + j)]
        s = self._obs_float(self._slot(picked))
        s_n = self._obs_float(self._slot(picked + n_step))
        a = torch.from_numpy(self.action[self._slot(picked)].copy())
        discount = torch.full((batch,), gamma**n_step)
        return s, a, torch.from_numpy(rew), s_n, discount
