"""Example-based RL loop: act, label with the classifier snapshot, retrain the
ensemble on schedule, and make one TD3-style agent update per environment
step. The environment's oracle reward is unreadable inside this loop; only
success counters and wipe tallies are logged, for evaluation curves.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .. import scene
from ..io.container import load_container, save_container
from .agent import DrQAgent, RLConfig
from .ensemble import EnsembleReward, PixelEncoder, reward, train_classifiers
from .replay import ReplayBuffer

AGENT_FORMAT = "goalsmith-agent-v1"


@dataclass
class RLRunResult:
    agent: DrQAgent
    ensemble: EnsembleReward
    metrics_path: Path | None
    episode_returns: list


def _goal_tensor(goal_dataset) -> torch.Tensor:
    images = goal_dataset.images if hasattr(goal_dataset, "images") else goal_dataset
    arr = np.asarray(images, dtype=np.float32)
    return torch.from_numpy(arr).permute(0, 3, 1, 2)


def _oracle_metrics(env_id: str, info: scene.EnvInfo) -> dict:
    if env_id == "wipe":
        return {"particles_wiped": info.particles_wiped}
    if env_id == "push":
        return {"push_success": bool(info.push_success)}
    return {"led_success": bool(info.led_success)}


def rl_train(env_id: str, goal_dataset, config: RLConfig | None = None,
             metrics_path=None, seed: int | None = None, progress=None) -> RLRunResult:
    config = config or RLConfig()
    seed = config.seed if seed is None else seed
    agent = DrQAgent(config, seed=seed)
    ensemble = EnsembleReward(agent.encoder, n_heads=config.ensemble,
                              mixup_alpha=config.mixup_alpha, lr=config.cls_lr,
                              seed=seed)
    if config.total_steps == 0:
        return RLRunResult(agent, ensemble, None, [])

    goals = _goal_tensor(goal_dataset)
    capacity = config.capacity or config.total_steps + config.episode_len + 1
    buffer = ReplayBuffer(capacity, recency=config.recency, seed=seed)
    rng = np.random.default_rng(seed)

    fh = None
    if metrics_path is not None:
        metrics_path = Path(metrics_path)
        metrics_path.parent.mkdir(parents=True, exist_ok=True)
        fh = open(metrics_path, "w")

    def emit(record: dict):
        if fh:
            fh.write(json.dumps(record) + "\n")
            fh.flush()

    episode_returns = []
    t_start = time.time()
    with scene.forbid_oracle_reward():
        episode = 0
        spec, obs = scene.reset(env_id, int(rng.integers(1 << 30)))
        buffer.add(obs.image, episode)
        ep_return = 0.0
        ep_len = 0
        last_info = None
        for step in range(1, config.total_steps + 1):
            if step <= config.warmup:
                action = rng.uniform(-1.0, 1.0, size=2)
            else:
                action = agent.act(obs.image, stddev=config.stddev_at(step))
            spec, obs, info = scene.step(spec, action)
            r = reward(ensemble, obs.image)
            buffer.set_transition(buffer.last_index, action, r)
            buffer.add(obs.image, episode)
            ep_return += r
            ep_len += 1
            last_info = info

            if ep_len >= config.episode_len:
                emit({"kind": "episode", "step": step, "episode": episode,
                      "classifier_return": ep_return,
                      "oracle_metrics": _oracle_metrics(env_id, last_info)})
                episode_returns.append(ep_return)
                episode += 1
                spec, obs = scene.reset(env_id, int(rng.integers(1 << 30)))
                buffer.add(obs.image, episode)
                ep_return, ep_len = 0.0, 0

            if step % config.cls_interval == 0 and step >= config.warmup:
                losses = train_classifiers(ensemble, goals, buffer,
                                           steps=config.cls_steps, batch=config.batch)
                emit({"kind": "classifier", "step": step, "classifier_losses": losses})

            if step >= config.warmup:
                agent.update(buffer, step)

            if progress and step % 5000 == 0:
                progress(step, config.total_steps, time.time() - t_start)
    if fh:
        fh.close()
    return RLRunResult(agent, ensemble, metrics_path, episode_returns)


def evaluate_agent(agent: DrQAgent, env_id: str, episodes: int = 20,
                   seed_base: int = 777_000, episode_len: int = 200) -> dict:
    """Greedy rollouts with oracle read-outs (evaluation only)."""
    successes = 0
    wiped = []
    for e in range(episodes):
        spec, obs = scene.reset(env_id, seed_base + e)
        info = None
        for _ in range(episode_len):
            action = agent.act(obs.image, stddev=0.0)
            spec, obs, info = scene.step(spec, action)
            if env_id != "wipe" and (info.push_success or info.led_success):
                break
        if env_id == "wipe":
            wiped.append(info.particles_wiped)
        elif env_id == "push":
            successes += int(info.push_success)
        else:
            successes += int(info.led_success)
    out = {"episodes": episodes}
    if env_id == "wipe":
        out["mean_particles_wiped"] = float(np.mean(wiped))
    else:
        out["success_rate"] = successes / episodes
    return out


def save_agent(agent: DrQAgent, ensemble: EnsembleReward, path):
    meta = {"format": AGENT_FORMAT, "n_heads": ensemble.n_heads,
            "config": {k: v for k, v in vars(agent.config).items()}}
    arrays = agent.state_arrays()
    for k, v in ensemble.heads.state_dict().items():
        arrays[f"heads.{k}"] = v.numpy()
    return save_container(path, meta, arrays)


def load_agent(path) -> tuple:
    meta, arrays = load_container(path)
    config = RLConfig(**meta["config"])
    agent = DrQAgent(config)
    agent.load_state_arrays({k: v for k, v in arrays.items() if not k.startswith("heads.")})
    ensemble = EnsembleReward(agent.encoder, n_heads=meta["n_heads"],
                              mixup_alpha=config.mixup_alpha, lr=config.cls_lr)
    ensemble.heads.load_state_dict(
        {k[6:]: torch.from_numpy(v) for k, v in arrays.items() if k.startswith("heads.")})
    ensemble.invalidate_fused()
    return agent, ensemble
