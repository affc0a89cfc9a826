"""Evaluation-side computations: first-frame-normalized reward curves with
confidence bands, per-task metric tables, and the user-study rating pipeline
(rankings -> pairwise comparisons -> Glicko-2 -> normalized score).

Everything here is a pure function over immutable inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scene.spec import EnvInfo, InputError

# Glicko-2 system constants (reference defaults)
GLICKO2_SCALE = 173.7178
INITIAL_RATING = 1500.0
INITIAL_RD = 350.0
INITIAL_VOL = 0.06
TAU = 0.5
_CONVERGENCE = 1e-6

RATING_FLOOR = 800.0
RATING_CEIL = 2000.0


@dataclass
class Trajectory:
    frames: list                      # images, length = len(actions) + 1
    actions: list = field(default_factory=list)
    infos: list = field(default_factory=list)
    success: bool = False

    def __post_init__(self):
        if not self.frames:
            raise InputError("trajectory needs at least one frame")
        if self.actions and len(self.frames) != len(self.actions) + 1:
            raise InputError(
                f"{len(self.frames)} frames vs {len(self.actions)} actions")


def reward_curve(ensemble, trajectory: Trajectory) -> np.ndarray:
    """r_t = R(frame_t) - R(frame_0); the first point is exactly zero."""
    from .rl.ensemble import reward

    frames = np.stack([np.asarray(f, dtype=np.float32) for f in trajectory.frames])
    raw = np.asarray(reward(ensemble, frames), dtype=np.float64)
    out = raw - raw[0]
    out[0] = 0.0
    return out


def resample_curve(values: np.ndarray, length: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if len(values) == length:
        return values
    src = np.linspace(0.0, 1.0, len(values))
    dst = np.linspace(0.0, 1.0, length)
    return np.interp(dst, src, values)


def curve_band(trajectories, ensemble) -> dict:
    """Pointwise mean and normal-approximation 95% band over trajectories.

    Unequal lengths are linearly resampled to the longest. A single
    trajectory yields the mean only, flagged band_defined=False.
    """
    if not trajectories:
        raise InputError("need at least one trajectory")
    curves = [reward_curve(ensemble, tr) for tr in trajectories]
    length = max(len(c) for c in curves)
    grid = np.stack([resample_curve(c, length) for c in curves])
    mean = grid.mean(axis=0)
    if grid.shape[0] < 2:
        return {"mean": mean, "lo": mean.copy(), "hi": mean.copy(),
                "band_defined": False, "n": 1}
    sem = grid.std(axis=0, ddof=1) / math.sqrt(grid.shape[0])
    half = 1.959963984540054 * sem
    return {"mean": mean, "lo": mean - half, "hi": mean + half,
            "band_defined": True, "n": grid.shape[0]}


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.1f}±{std:.1f}"


def metrics_table(run_logs: dict) -> dict:
    """Per-task mean +/- sample std over seeds.

    run_logs maps task id -> list of per-run scalar outcomes (cleaned stains
    for wipe; success rates in percent for push/led). Empty cells render N/A.
    """
    table = {}
    for task, values in run_logs.items():
        if not values:
            table[task] = {"mean": None, "std": None, "text": "N/A"}
            continue
        arr = np.asarray(values, dtype=np.float64)
        mean = float(arr.mean())
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        table[task] = {"mean": mean, "std": std, "text": format_mean_std(mean, std)}
    return table


def rankings_to_comparisons(rankings) -> list:
    """Every ordered pair in every ranking becomes one win/loss record.

    A ranking lists method ids best-first; emits (winner, loser) tuples,
    C(k, 2) of them per ranking of k methods.
    """
    out = []
    for ranking in rankings:
        seen = set()
        for m in ranking:
            if m in seen:
                raise InputError(f"duplicate method {m!r} in ranking {ranking!r}")
            seen.add(m)
        for i, winner in enumerate(ranking):
            for loser in ranking[i + 1 :]:
                out.append((winner, loser))
    return out


@dataclass
class Rating:
    rating: float = INITIAL_RATING
    rd: float = INITIAL_RD
    volatility: float = INITIAL_VOL

    @property
    def normalized(self) -> float:
        return normalize_rating(self.rating)


def normalize_rating(rating: float) -> float:
    """(R - 800) / (2000 - 800) * 100, clamped to [0, 100]."""
    value = (rating - RATING_FLOOR) / (RATING_CEIL - RATING_FLOOR) * 100.0
    return float(min(100.0, max(0.0, value)))


def _g(phi: float) -> float:
    return 1.0 / math.sqrt(1.0 + 3.0 * phi * phi / (math.pi * math.pi))


def _expected(mu: float, mu_j: float, phi_j: float) -> float:
    return 1.0 / (1.0 + math.exp(-_g(phi_j) * (mu - mu_j)))


def _new_volatility(sigma, phi, v, delta, tau=TAU):
    a = math.log(sigma * sigma)
    phi2 = phi * phi

    def f(x):
        ex = math.exp(x)
        return (ex * (delta * delta - phi2 - v - ex)
                / (2.0 * (phi2 + v + ex) ** 2)) - (x - a) / (tau * tau)

    A = a
    if delta * delta > phi2 + v:
        B = math.log(delta * delta - phi2 - v)
    else:
        k = 1
        while f(a - k * tau) < 0:
            k += 1
        B = a - k * tau
    fa, fb = f(A), f(B)
    while abs(B - A) > _CONVERGENCE:
        C = A + (A - B) * fa / (fb - fa)
        fc = f(C)
        if fc * fb <= 0:
            A, fa = B, fb
        else:
            fa = fa / 2.0
        B, fb = C, fc
    return math.exp(A / 2.0)


def _update_one(player: Rating, grouped) -> Rating:
    """One Glicko-2 rating period for one player.

    grouped: list of (Rating, score, count) aggregated per opponent/outcome,
    in a canonical order, so the update is exactly permutation-invariant in
    the original comparison order.
    """
    mu = (player.rating - INITIAL_RATING) / GLICKO2_SCALE
    phi = player.rd / GLICKO2_SCALE
    if not grouped:
        phi_star = math.sqrt(phi * phi + player.volatility**2)
        return Rating(player.rating, phi_star * GLICKO2_SCALE, player.volatility)
    v_inv = 0.0
    delta_sum = 0.0
    for opp, score, count in grouped:
        mu_j = (opp.rating - INITIAL_RATING) / GLICKO2_SCALE
        phi_j = opp.rd / GLICKO2_SCALE
        e = _expected(mu, mu_j, phi_j)
        g = _g(phi_j)
        v_inv += count * (g * g * e * (1.0 - e))
        delta_sum += count * (g * (score - e))
    v = 1.0 / v_inv
    delta = v * delta_sum
    sigma_new = _new_volatility(player.volatility, phi, v, delta)
    phi_star = math.sqrt(phi * phi + sigma_new * sigma_new)
    phi_new = 1.0 / math.sqrt(1.0 / (phi_star * phi_star) + 1.0 / v)
    mu_new = mu + phi_new * phi_new * delta_sum
    return Rating(mu_new * GLICKO2_SCALE + INITIAL_RATING,
                  phi_new * GLICKO2_SCALE, sigma_new)


def glicko2_rate(comparisons, methods=None,
                 initial: Rating | None = None) -> dict:
    """One rating period over all comparisons; deterministic and exactly
    order-invariant within the period. Returns method -> Rating."""
    comparisons = list(comparisons)
    found = {m for pair in comparisons for m in pair}
    methods = list(methods) if methods is not None else sorted(found)
    for m in found:
        if m not in methods:
            raise InputError(f"comparison references unknown method {m!r}")
    for m in methods:
        if m not in found:
            raise InputError(f"method {m!r} appears in no comparison")
    initial = initial or Rating()
    start = {m: Rating(initial.rating, initial.rd, initial.volatility)
             for m in methods}
    counts = {m: {} for m in methods}
    for winner, loser in comparisons:
        counts[winner][(loser, 1.0)] = counts[winner].get((loser, 1.0), 0) + 1
        counts[loser][(winner, 0.0)] = counts[loser].get((winner, 0.0), 0) + 1
    out = {}
    for m in methods:
        grouped = [(start[opp], score, n) for (opp, score), n in
                   sorted(counts[m].items(), key=lambda kv: (str(kv[0][0]), kv[0][1]))]
        out[m] = _update_one(start[m], grouped)
    return out


def rating_table(comparisons, methods=None) -> list:
    """Rows of (method, rating, rd, volatility, normalized score), best first."""
    rated = glicko2_rate(comparisons, methods)
    rows = [
        {"method": m, "rating": r.rating, "rd": r.rd,
         "volatility": r.volatility, "score": r.normalized}
        for m, r in rated.items()
    ]
    rows.sort(key=lambda row: -row["rating"])
    return rows


def read_rankings_csv(path) -> list:
    """CSV rows: evaluator_id, item_id, then the ranked method ids best-first."""
    rankings = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            methods = [c.strip() for c in row[2:] if c.strip()]
            if methods:
                rankings.append(methods)
    return rankings


def episode_metric(env_id: str, info: EnvInfo) -> float:
    if env_id == "wipe":
        return float(info.particles_wiped)
    if env_id == "push":
        return 100.0 * float(info.push_success)
    return 100.0 * float(info.led_success)
