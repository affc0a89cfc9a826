"""Scene state containers for the tabletop environments.

All positions are fractional (row, col) coordinates in [0, 1]^2 with row 0 at
the top of the image. Rendering is a pure function of the spec, so two specs
that compare equal produce bit-identical images.
"""

from __future__ import annotations

import contextlib
import json
import threading
from dataclasses import dataclass, field, replace

ENV_IDS = ("wipe", "push", "led")
LED_STATES = ("red", "green")
WIPE_PARTICLES = 100

IMAGE_SIZE = 64
EPISODE_LENGTH = 200


class InputError(ValueError):
    """Raised when a caller violates an operation's preconditions."""


def _check_frac(name, value):
    r, c = value
    if not (0.0 <= r <= 1.0 and 0.0 <= c <= 1.0):
        raise InputError(f"{name} {value!r} outside [0,1]^2")
    return (float(r), float(c))


@dataclass
class SceneSpec:
    env_id: str
    seed: int
    gripper: tuple[float, float]
    particles: tuple[tuple[tuple[float, float], bool], ...] = ()
    led_state: str | None = None
    button: tuple[float, float] | None = None
    light: tuple[float, float] | None = None
    cube: tuple[float, float] | None = None
    target: tuple[float, float] | None = None
    step_index: int = 0
    push_latched: bool = False
    led_latched: bool = False

    def __post_init__(self):
        if self.env_id not in ENV_IDS:
            raise InputError(f"unknown env_id {self.env_id!r}")
        self.gripper = _check_frac("gripper", self.gripper)
        self.particles = tuple(
            (_check_frac("particle", pos), bool(alive)) for pos, alive in self.particles
        )
        if self.env_id == "led":
            if self.led_state not in LED_STATES:
                raise InputError(f"led_state must be one of {LED_STATES}")
            self.button = _check_frac("button", self.button)
            self.light = _check_frac("light", self.light)
        if self.env_id == "push":
            self.cube = _check_frac("cube", self.cube)
            self.target = _check_frac("target", self.target)

    @property
    def alive_count(self) -> int:
        return sum(1 for _, alive in self.particles if alive)

    def with_updates(self, **kwargs) -> "SceneSpec":
        return replace(self, **kwargs)

    def to_json(self) -> str:
        d = {
            "env_id": self.env_id,
            "seed": self.seed,
            "gripper": list(self.gripper),
            "particles": [[list(p), a] for p, a in self.particles],
            "led_state": self.led_state,
            "button": list(self.button) if self.button else None,
            "light": list(self.light) if self.light else None,
            "cube": list(self.cube) if self.cube else None,
            "target": list(self.target) if self.target else None,
            "step_index": self.step_index,
            "push_latched": self.push_latched,
            "led_latched": self.led_latched,
        }
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        d = json.loads(text)
        return cls(
            env_id=d["env_id"],
            seed=d["seed"],
            gripper=tuple(d["gripper"]),
            particles=tuple((tuple(p), a) for p, a in d["particles"]),
            led_state=d["led_state"],
            button=tuple(d["button"]) if d["button"] else None,
            light=tuple(d["light"]) if d["light"] else None,
            cube=tuple(d["cube"]) if d["cube"] else None,
            target=tuple(d["target"]) if d["target"] else None,
            step_index=d["step_index"],
            push_latched=d.get("push_latched", False),
            led_latched=d.get("led_latched", False),
        )


@dataclass
class Observation:
    image: "np.ndarray"  # (64, 64, 3) float32 in [0, 1]
    step: int = 0


_GUARD = threading.local()


@contextlib.contextmanager
def forbid_oracle_reward():
    """Make any EnvInfo.oracle_reward access raise inside the block.

    The RL trainer wraps its whole interaction loop in this guard so the
    evaluation-only reward can never leak into the learner.
    """
    prev = getattr(_GUARD, "active", False)
    _GUARD.active = True
    try:
        yield
    finally:
        _GUARD.active = prev


class OracleLeakError(RuntimeError):
    pass


@dataclass
class EnvInfo:
    particles_wiped: int = 0
    push_success: bool = False
    led_success: bool = False
    action_clipped: bool = False
    _oracle_reward: float = field(default=0.0, repr=False)

    @property
    def oracle_reward(self) -> float:
        if getattr(_GUARD, "active", False):
            raise OracleLeakError("oracle_reward accessed inside a training guard")
        return self._oracle_reward

    def to_dict(self) -> dict:
        return {
            "particles_wiped": self.particles_wiped,
            "push_success": self.push_success,
            "led_success": self.led_success,
            "action_clipped": self.action_clipped,
            "oracle_reward": self._oracle_reward,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvInfo":
        return cls(
            particles_wiped=d["particles_wiped"],
            push_success=d["push_success"],
            led_success=d["led_success"],
            action_clipped=d.get("action_clipped", False),
            _oracle_reward=d.get("oracle_reward", 0.0),
        )
