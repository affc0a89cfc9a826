"""Environment dynamics: reset, step, oracle goals, scripted policies.

The three tasks mirror a tabletop manipulation setup seen from above:
  wipe  - drag the gripper across a patch of 100 dark particles to erase them
  push  - shove a red cube onto a green target dot near the table's lower-right
  led   - touch a button (or the light itself) to flip a disc from red to green

Rewards computed here are oracle quantities surfaced only through EnvInfo for
evaluation; the example-based learner is barred from reading them.
"""

from __future__ import annotations

import numpy as np

from .spec import (
    ENV_IDS,
    EPISODE_LENGTH,
    WIPE_PARTICLES,
    EnvInfo,
    InputError,
    Observation,
    SceneSpec,
)
from .render import render

MOVE_SCALE = 0.05
WIPE_RADIUS = 0.07
PUSH_CONTACT = 0.10
PUSH_SUCCESS_TOL = 0.06
LED_BUTTON_RADIUS = 0.08
LED_LIGHT_RADIUS = 0.11

# Target dot spawns inside the goal region used by the push editing preset so
# that "cube inside the box" and "cube on the target" agree.
PUSH_TARGET_ROWS = (0.52, 0.68)
PUSH_TARGET_COLS = (0.72, 0.88)

_ENV_CODE = {e: i for i, e in enumerate(ENV_IDS)}


def _dist(a, b) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def reset(env_id: str, seed: int) -> tuple[SceneSpec, Observation]:
    """Randomized initial layout; same (env_id, seed) gives the same spec."""
    if env_id not in ENV_IDS:
        raise InputError(f"unknown env_id {env_id!r}")
    rng = np.random.default_rng([int(seed) & 0x7FFFFFFF, _ENV_CODE[env_id]])

    if env_id == "wipe":
        gripper = tuple(rng.uniform(0.08, 0.92, size=2))
        center = rng.uniform(0.30, 0.70, size=2)
        # scribble: a short random walk clipped to a patch around the center
        steps = rng.normal(0.0, 0.02, size=(WIPE_PARTICLES, 2))
        path = center + np.clip(np.cumsum(steps, axis=0), -0.11, 0.11)
        particles = tuple((tuple(np.clip(p, 0.02, 0.98)), True) for p in path)
        spec = SceneSpec(env_id="wipe", seed=seed, gripper=gripper, particles=particles)
    elif env_id == "push":
        target = (
            rng.uniform(*PUSH_TARGET_ROWS),
            rng.uniform(*PUSH_TARGET_COLS),
        )
        # rejection-sample so cube, target, and gripper never occlude each other
        while True:
            cube = tuple(rng.uniform(0.10, 0.90, size=2))
            if _dist(cube, target) > 0.16:
                break
        while True:
            gripper = tuple(rng.uniform(0.08, 0.92, size=2))
            if _dist(gripper, cube) > 0.16 and _dist(gripper, target) > 0.13:
                break
        spec = SceneSpec(env_id="push", seed=seed, gripper=gripper, cube=cube, target=target)
    else:
        light = (rng.uniform(0.60, 0.80), rng.uniform(0.60, 0.85))
        button = (rng.uniform(0.60, 0.80), rng.uniform(0.15, 0.40))
        gripper = (rng.uniform(0.08, 0.45), rng.uniform(0.08, 0.92))
        spec = SceneSpec(
            env_id="led", seed=seed, gripper=gripper,
            led_state="red", button=button, light=light,
        )
    return spec, render(spec)


def _segment_dist(p, a, b) -> float:
    """Distance from point p to segment a-b."""
    p, a, b = np.asarray(p), np.asarray(a), np.asarray(b)
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def step(spec: SceneSpec, action) -> tuple[SceneSpec, Observation, EnvInfo]:
    """Advance one timestep. Out-of-bounds actions are clipped and flagged."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (2,):
        raise InputError(f"action must be a 2-vector, got shape {action.shape}")
    clipped = bool(np.any(np.abs(action) > 1.0 + 1e-12))
    action = np.clip(action, -1.0, 1.0)

    old_g = np.asarray(spec.gripper)
    new_g = np.clip(old_g + action * MOVE_SCALE, 0.03, 0.97)
    moved = float(np.linalg.norm(new_g - old_g)) > 1e-12

    updates: dict = {"gripper": tuple(new_g), "step_index": spec.step_index + 1}
    reward = 0.0

    if spec.env_id == "wipe":
        alive_before = spec.alive_count
        if moved:
            particles = tuple(
                (pos, alive and _segment_dist(pos, old_g, new_g) > WIPE_RADIUS)
                for pos, alive in spec.particles
            )
        else:
            particles = spec.particles
        updates["particles"] = particles
        wiped_now = alive_before - sum(1 for _, a in particles if a)
        reward += 0.5 * wiped_now
        if alive_before > 0 and wiped_now == alive_before:
            reward += 10.0
        alive_pos = [p for p, a in spec.particles if a]
        if alive_pos:
            d = min(_dist(tuple(new_g), p) for p in alive_pos)
            reward += 0.01 * max(0.0, 1.0 - d)
    elif spec.env_id == "push":
        cube = np.asarray(spec.cube)
        d_gc_before = _dist(tuple(new_g), tuple(cube))
        if d_gc_before < PUSH_CONTACT:
            away = cube - new_g
            norm = float(np.linalg.norm(away))
            direction = away / norm if norm > 1e-12 else np.array([0.0, 1.0])
            cube = np.clip(new_g + direction * PUSH_CONTACT, 0.04, 0.96)
        d_ct_old = _dist(spec.cube, spec.target)
        d_ct_new = _dist(tuple(cube), spec.target)
        d_gc_old = _dist(spec.gripper, spec.cube)
        reward += 5.0 * (d_ct_old - d_ct_new) + 1.0 * max(0.0, d_gc_old - d_gc_before)
        success_now = d_ct_new < PUSH_SUCCESS_TOL
        if success_now and not spec.push_latched:
            reward += 10.0
        updates["cube"] = tuple(cube)
        updates["push_latched"] = spec.push_latched or success_now
    else:
        touched = (
            _dist(tuple(new_g), spec.button) < LED_BUTTON_RADIUS
            or _dist(tuple(new_g), spec.light) < LED_LIGHT_RADIUS
        )
        d_old = _dist(spec.gripper, spec.button)
        d_new = _dist(tuple(new_g), spec.button)
        reward += 5.0 * (d_old - d_new)
        if touched and not spec.led_latched:
            reward += 10.0
        if touched or spec.led_latched:
            updates["led_state"] = "green"
            updates["led_latched"] = True

    new_spec = spec.with_updates(**updates)
    initial_alive = len(spec.particles)
    info = EnvInfo(
        particles_wiped=initial_alive - new_spec.alive_count if spec.env_id == "wipe" else 0,
        push_success=new_spec.push_latched,
        led_success=new_spec.led_latched,
        action_clipped=clipped,
        _oracle_reward=reward,
    )
    return new_spec, render(new_spec), info


def oracle_goal(env_id: str, spec: SceneSpec) -> Observation:
    """Render the solved state of the same layout (evaluation upper bound)."""
    if env_id != spec.env_id:
        raise InputError(f"env_id {env_id!r} does not match spec {spec.env_id!r}")
    if env_id == "wipe":
        solved = spec.with_updates(
            particles=tuple((p, False) for p, _ in spec.particles)
        )
    elif env_id == "push":
        solved = spec.with_updates(cube=spec.target, push_latched=True)
    else:
        solved = spec.with_updates(led_state="green", led_latched=True)
    return render(solved)


def _toward(src, dst, gain=1.0):
    delta = (np.asarray(dst) - np.asarray(src)) * gain / MOVE_SCALE
    return np.clip(delta, -1.0, 1.0)


def scripted_policy(env_id: str, spec: SceneSpec) -> np.ndarray:
    """Greedy hand-written controller used to collect successful trajectories."""
    if env_id != spec.env_id:
        raise InputError("env_id mismatch")
    g = np.asarray(spec.gripper)

    if env_id == "wipe":
        alive = [p for p, a in spec.particles if a]
        if not alive:
            return np.zeros(2)
        nearest = min(alive, key=lambda p: _dist(tuple(g), p))
        return _toward(g, nearest, gain=1.0)

    if env_id == "push":
        cube = np.asarray(spec.cube)
        target = np.asarray(spec.target)
        if _dist(spec.cube, spec.target) < PUSH_SUCCESS_TOL * 0.8:
            return np.zeros(2)
        push_dir = target - cube
        push_dir = push_dir / (np.linalg.norm(push_dir) + 1e-12)
        to_cube = cube - g
        d_gc = float(np.linalg.norm(to_cube))
        dir_gc = to_cube / max(d_gc, 1e-9)
        if float(dir_gc @ push_dir) > 0.88:
            # roughly behind the cube: drive through it toward the target
            return _toward(g, cube + push_dir * 0.03)
        behind = cube - push_dir * 0.16
        if _segment_dist(cube, g, behind) < 0.12 and d_gc < 0.35:
            # straight path grazes the cube: slide tangentially around it,
            # with a radial push-out term when too close for comfort
            tangent = np.array([-dir_gc[1], dir_gc[0]])
            dir_b = behind - g
            dir_b = dir_b / (np.linalg.norm(dir_b) + 1e-12)
            if dir_gc[0] * dir_b[1] - dir_gc[1] * dir_b[0] < 0:
                tangent = -tangent
            vel = tangent + (-dir_gc) * max(0.0, (0.14 - d_gc)) * 8.0
            vel = vel / (np.linalg.norm(vel) + 1e-12)
            return np.clip(vel, -1.0, 1.0)
        return _toward(g, behind)

    if spec.led_latched:
        return np.zeros(2)
    return _toward(g, spec.button)


def run_scripted_episode(env_id: str, seed: int, max_steps: int = EPISODE_LENGTH):
    """Roll out the scripted policy; returns (frames, actions, infos, success)."""
    spec, obs = reset(env_id, seed)
    frames, actions, infos = [obs.image], [], []
    success = False
    for _ in range(max_steps):
        a = scripted_policy(env_id, spec)
        spec, obs, info = step(spec, a)
        frames.append(obs.image)
        actions.append(np.asarray(a, dtype=np.float64))
        infos.append(info)
        if env_id == "wipe":
            success = spec.alive_count == 0
        elif env_id == "push":
            success = info.push_success
        else:
            success = info.led_success
        if success:
            break
    return frames, actions, infos, success
