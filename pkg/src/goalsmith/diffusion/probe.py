"""Held-out scene-type probe: logistic regression on downsampled renders.

Trained purely on renderer output (never on diffusion samples), so it stays
an independent oracle for "does this sample look like the right task".
"""

from __future__ import annotations

import numpy as np
from sklearn.linear_model import LogisticRegression

from .. import scene

PROBE_SEED_BASE = 900_000  # keep probe scenes disjoint from training scenes


def _features(images: np.ndarray) -> np.ndarray:
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    b, h, w, c = arr.shape
    small = arr.reshape(b, 16, h // 16, 16, w // 16, c).mean(axis=(2, 4))
    return small.reshape(b, -1)


def _probe_pairs(n_per_env: int, seed_base: int):
    images, labels = [], []
    for li, env_id in enumerate(scene.ENV_IDS):
        for i in range(n_per_env):
            spec, obs = scene.reset(env_id, seed_base + i)
            rng = np.random.default_rng([seed_base + i, li])
            if env_id == "wipe" and rng.random() < 0.4:
                spec = spec.with_updates(
                    particles=tuple((p, False) for p, _ in spec.particles))
                obs = scene.render(spec)
            elif env_id == "push" and rng.random() < 0.3:
                obs = scene.render(spec.with_updates(cube=spec.target))
            elif env_id == "led" and rng.random() < 0.5:
                obs = scene.render(spec.with_updates(led_state="green"))
            images.append(obs.image)
            labels.append(li)
    return np.stack(images), np.asarray(labels)


class SceneProbe:
    def __init__(self, n_per_env: int = 300, seed_base: int = PROBE_SEED_BASE):
        x, y = _probe_pairs(n_per_env, seed_base)
        self.clf = LogisticRegression(max_iter=2000, C=1.0)
        self.clf.fit(_features(x), y)
        x_test, y_test = _probe_pairs(80, seed_base + 10_000)
        self.holdout_accuracy = float(self.clf.score(_features(x_test), y_test))

    def classify(self, images) -> list:
        pred = self.clf.predict(_features(images))
        return [scene.ENV_IDS[i] for i in pred]

    def accuracy(self, images, env_ids) -> float:
        pred = self.classify(images)
        return float(np.mean([p == e for p, e in zip(pred, env_ids)]))


_cached_probe = None


def default_probe() -> SceneProbe:
    global _cached_probe
    if _cached_probe is None:
        _cached_probe = SceneProbe()
    return _cached_probe
