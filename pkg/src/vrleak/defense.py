"""Bounded Laplace noise on tracked positions, as a local privacy defense."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import InvalidBounds, InvalidEpsilon
from .telemetry import TelemetryTrace

# x, y, z extents (m) that comfortably contain a home play space
DEFAULT_BOUNDS = ((-3.0, 3.0), (0.0, 2.5), (-3.0, 3.0))
MAX_ROUNDS = 10_000


def _check(epsilon, bounds):
    if not isinstance(epsilon, (int, float)) or math.isnan(epsilon) or epsilon <= 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {epsilon!r}")
    b = np.asarray(bounds, float)
    if b.shape != (3, 2):
        raise InvalidBounds("bounds must be three (lo, hi) pairs")
    if not np.isfinite(b).all() or not (b[:, 0] < b[:, 1]).all():
        raise InvalidBounds("bounds must be finite with lo < hi")
    return b


def bounded_laplace(values: np.ndarray, lo, hi, scale, rng: np.random.Generator) -> np.ndarray:
    """Laplace(0, scale) added to each value, redrawn until the result lies in [lo, hi].

    ``lo``, ``hi`` and ``scale`` broadcast against the last axis of ``values``.
    """
    x = np.clip(values, lo, hi)
    lo, hi, scale = (np.broadcast_to(a, x.shape).ravel() for a in (lo, hi, scale))
    flat = x.ravel()
    out = flat + rng.laplace(0.0, 1.0, flat.size) * scale
    todo = np.flatnonzero((out < lo) | (out > hi))
    rounds = 0
    while todo.size:
        rounds += 1
        if rounds > MAX_ROUNDS:
            raise RuntimeError("bounded Laplace resampling did not terminate")
        draw = flat[todo] + rng.laplace(0.0, 1.0, todo.size) * scale[todo]
        out[todo] = draw
        todo = todo[(draw < lo[todo]) | (draw > hi[todo])]
    out = out.reshape(x.shape)
    return out


def apply_bounded_laplace(
    trace: TelemetryTrace,
    epsilon: float,
    bounds: Sequence[tuple[float, float]] = DEFAULT_BOUNDS,
    seed: int = 0,
) -> TelemetryTrace:
    """Perturb every position coordinate with scale (hi - lo) / epsilon; orientation is kept."""
    b = _check(epsilon, bounds)
    rng = np.random.default_rng(seed)
    scale = (b[:, 1] - b[:, 0]) / float(epsilon)
    pos = bounded_laplace(np.array(trace.pos), b[:, 0], b[:, 1], scale, rng)
    return trace.replace(pos=pos)


# ------------------------------------------------------------------ evaluation

POSITION_ATTACKS = ("height", "wingspan", "room_area")


def position_attacks(trace: TelemetryTrace, events, script=None) -> dict:
    """Outputs of the attacks that read positions; a failed attack maps to None."""
    from . import anthropometry as an
    from .environment import estimate_room_dims
    from .errors import VRLeakError

    out = {}
    for name, fn in (
        ("height", lambda: an.estimate_height(trace, an.stand_windows(events, script))),
        ("wingspan", lambda: an.estimate_wingspan(trace, events)),
        ("room_area", lambda: estimate_room_dims(trace).area_m2),
    ):
        try:
            out[name] = float(fn())
        except VRLeakError:
            out[name] = None
    return out


def attack_error(outputs: dict, truth: dict, cap: float = 10.0) -> float:
    """Mean relative error over position attacks, each capped at ``cap``; a failure counts as ``cap``."""
    errs = []
    for k in POSITION_ATTACKS:
        v = outputs.get(k)
        errs.append(cap if v is None else min(cap, abs(v - truth[k]) / abs(truth[k])))
    return float(np.mean(errs))


def epsilon_sweep(sessions, epsilons, seeds, bounds=DEFAULT_BOUNDS, script=None, cap: float = 10.0) -> dict[float, float]:
    """Mean position-attack error per epsilon.

    ``sessions`` is a sequence of (bundle, truth) pairs where truth maps
    height, wingspan and room_area to their true values.
    """
    result = {}
    for eps in epsilons:
        errs = []
        for seed in seeds:
            for i, (bundle, truth) in enumerate(sessions):
                noisy = apply_bounded_laplace(bundle.trace, eps, bounds, seed=seed * 100_003 + i)
                errs.append(attack_error(position_attacks(noisy, bundle.events, script), truth, cap))
        result[float(eps)] = float(np.mean(errs))
    return result
