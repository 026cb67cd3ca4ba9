"""Body measurements and motor behavior recovered from telemetry and events."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import puzzles as pz
from .errors import (
    CapabilityDenied,
    EmptyWindow,
    NegativeLatency,
    NoButtonEvents,
    NoSquatSegment,
    NoStimulusPairs,
    NoTposeDetected,
)
from .telemetry import HMD, LEFT, RIGHT, DeviceApiSample, EventKind, EventRecord, SessionBundle, TelemetryTrace

EYE_OFFSET_M = 0.11
LOW_FITNESS_RATIO = 0.25
FAST_REACTION_S = 0.250
FRAME_S = 1.0 / 60.0
# shave this fraction off each end of a puzzle before treating it as a stand window
WINDOW_TRIM = 0.02


@dataclass(frozen=True)
class TposeConfig:
    shoulder_drop_m: float = 0.15
    band_m: float = 0.25
    fingertip_m: float = 0.10
    arm_tie_m: float = 0.01


def round_to(value: float, step: float | None) -> float:
    if step is None:
        return float(value)
    inv = round(1.0 / step)
    if step < 1 and abs(1.0 / step - inv) < 1e-9:
        # k / inv is the float nearest the decimal, unlike k * step
        return round(value * inv) / inv
    return float(round(value / step) * step)


# ------------------------------------------------------------------ windows


def puzzle_entries(events: Sequence[EventRecord]) -> list[tuple[float, int]]:
    return sorted((e.t, e.puzzle_id) for e in events if e.kind is EventKind.PUZZLE_ENTER)


def puzzle_window(events: Sequence[EventRecord], puzzle_id: int) -> tuple[float, float] | None:
    """[enter, next enter) for a puzzle, or None when it was never entered."""
    entries = puzzle_entries(events)
    for i, (t, p) in enumerate(entries):
        if p == puzzle_id:
            end = entries[i + 1][0] if i + 1 < len(entries) else np.inf
            return t, end
    return None


def stand_windows(events: Sequence[EventRecord], script=None) -> list[tuple[float, float]]:
    """Windows of puzzles the script plays entirely standing still."""
    from .simulate import default_script

    script = default_script() if script is None else script
    out = []
    entries = puzzle_entries(events)
    for i, (t0, p) in enumerate(entries):
        if not script.primitives_of(p) or not script.primitives_of(p) <= {"stand", "idle"}:
            continue
        if i + 1 >= len(entries):
            continue
        t1 = entries[i + 1][0]
        trim = WINDOW_TRIM * (t1 - t0)
        out.append((t0 + trim, t1 - trim))
    return out


def _window_mask(trace: TelemetryTrace, windows) -> np.ndarray:
    mask = np.zeros(len(trace), bool)
    for t0, t1 in windows:
        mask |= trace.window_mask(t0, t1)
    return mask


# ------------------------------------------------------------------ height


def estimate_height(
    trace: TelemetryTrace,
    stand_windows: Sequence[tuple[float, float]],
    eye_offset_m: float = EYE_OFFSET_M,
    precision: float | None = 0.01,
) -> float:
    """95th percentile of head height while standing, plus the eye-to-crown offset."""
    if not stand_windows:
        raise EmptyWindow("no stand windows given")
    mask = _window_mask(trace, stand_windows)
    if not mask.any():
        raise EmptyWindow("stand windows contain no frames")
    y = float(np.percentile(trace.pos[mask, HMD, 1], 95))
    return round_to(y + eye_offset_m, precision)


# ------------------------------------------------------------------ T-pose


def _tpose_frames(trace: TelemetryTrace, events, cfg: TposeConfig) -> np.ndarray:
    win = puzzle_window(events, pz.POSE_PUZZLE) if events is not None else None
    mask = trace.window_mask(*win) if win else np.ones(len(trace), bool)
    shoulder = trace.pos[:, HMD, 1] - cfg.shoulder_drop_m
    for hand in (LEFT, RIGHT):
        mask &= np.abs(trace.pos[:, hand, 1] - shoulder) <= cfg.band_m
    if not mask.any():
        raise NoTposeDetected("no frame has both controllers at shoulder height")
    return np.flatnonzero(mask)


def _horizontal(v):
    return np.hypot(v[..., 0], v[..., 2])


def max_separation(trace: TelemetryTrace, events=None, cfg: TposeConfig = TposeConfig()) -> float:
    idx = _tpose_frames(trace, events, cfg)
    return float(_horizontal(trace.pos[idx, LEFT] - trace.pos[idx, RIGHT]).max())


def estimate_wingspan(
    trace: TelemetryTrace,
    events: Sequence[EventRecord] | None = None,
    cfg: TposeConfig = TposeConfig(),
    precision: float | None = 0.01,
) -> float:
    """Widest controller spread in a T-pose plus the grip-to-fingertip allowance."""
    return round_to(max_separation(trace, events, cfg) + cfg.fingertip_m, precision)


def arm_reaches(trace: TelemetryTrace, events=None, cfg: TposeConfig = TposeConfig()) -> tuple[float, float]:
    """Max horizontal distance from the head's ground point to each controller."""
    idx = _tpose_frames(trace, events, cfg)
    head = trace.pos[idx, HMD]
    return (
        float(_horizontal(trace.pos[idx, LEFT] - head).max()),
        float(_horizontal(trace.pos[idx, RIGHT] - head).max()),
    )


def compare_arm_lengths(trace: TelemetryTrace, events=None, cfg: TposeConfig = TposeConfig()) -> str:
    left, right = arm_reaches(trace, events, cfg)
    diff = left - right
    if abs(diff) < cfg.arm_tie_m - 1e-9:
        return "undetermined"
    return "left_longer" if diff > 0 else "right_longer"


# ------------------------------------------------------------------ handedness


def path_lengths(trace: TelemetryTrace) -> tuple[float, float]:
    steps = np.linalg.norm(np.diff(trace.pos, axis=0), axis=-1)
    return float(steps[:, LEFT].sum()), float(steps[:, RIGHT].sum())


def estimate_handedness(events: Sequence[EventRecord], trace: TelemetryTrace | None = None) -> str:
    """Majority hand over button presses; a tie goes to the busier controller."""
    hands = [e.payload["hand"] for e in events if e.kind is EventKind.BUTTON_PRESS]
    if not hands:
        raise NoButtonEvents("no ButtonPress events")
    right = hands.count("right")
    left = len(hands) - right
    if right != left:
        return "right" if right > left else "left"
    if trace is not None and len(trace) > 1:
        pl, pr = path_lengths(trace)
        if pl != pr:
            return "left" if pl > pr else "right"
    return "right"


# ------------------------------------------------------------------ IPD


def estimate_ipd(source: DeviceApiSample | SessionBundle | None) -> float:
    """Lens separation as reported by the headset, at 0.1 mm precision."""
    if isinstance(source, SessionBundle):
        if not source.attacker_tier.reads_device_api:
            raise CapabilityDenied(f"{source.attacker_tier.value} cannot read the device API")
        source = source.device_api
    if source is None:
        raise CapabilityDenied("no device API sample available")
    return round(source.ipd_m * 1e4) / 1e4


# ------------------------------------------------------------------ fitness


def squat_depth_ratio(trace: TelemetryTrace, events: Sequence[EventRecord], height_m: float) -> float:
    win = puzzle_window(events, pz.SQUAT_PUZZLE)
    if win is None:
        raise NoSquatSegment(f"puzzle {pz.SQUAT_PUZZLE} was never entered")
    y = trace.pos[trace.window_mask(*win), HMD, 1]
    if y.size < 2:
        raise NoSquatSegment("squat window holds fewer than 2 frames")
    standing = float(np.percentile(y, 95))
    return (standing - float(y.min())) / height_m


def fitness_class(ratio: float) -> str:
    return "low" if ratio < LOW_FITNESS_RATIO else "not_low"


def estimate_fitness(trace: TelemetryTrace, events: Sequence[EventRecord], height_m: float) -> str:
    return fitness_class(squat_depth_ratio(trace, events, height_m))


# ------------------------------------------------------------------ reaction


class ReactionTime(NamedTuple):
    seconds: float
    label: str


def reaction_class(seconds: float) -> str:
    return "fast" if seconds < FAST_REACTION_S else "slow"


def estimate_reaction_time(events: Sequence[EventRecord]) -> ReactionTime:
    """Median stimulus-to-press latency in the reaction room, snapped to 60 Hz frames.

    The k-th stimulus pairs with the k-th press.
    """
    ev = sorted((e for e in events if e.puzzle_id == pz.REACTION_PUZZLE), key=lambda e: e.t)
    stim = [e.t for e in ev if e.kind is EventKind.STIMULUS_SHOWN]
    press = [e.t for e in ev if e.kind is EventKind.BUTTON_PRESS]
    n = min(len(stim), len(press))
    if n == 0:
        raise NoStimulusPairs(f"no stimulus/press pairs in puzzle {pz.REACTION_PUZZLE}")
    lat = np.subtract(press[:n], stim[:n])
    if (lat < 0).any():
        raise NegativeLatency("a press precedes its stimulus")
    seconds = round(float(np.median(lat)) * 60) / 60
    return ReactionTime(seconds, reaction_class(seconds))
