"""Device and host fingerprinting from telemetry timing and device-API readings."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from . import puzzles as pz
from .errors import CapabilityDenied, EmptyTable, InvalidValue, MissingUfoAnswer, TooFewFrames
from .telemetry import DeviceApiSample, EventKind, EventRecord, SessionBundle, TelemetryTrace

MIN_FRAMES = 100
UNKNOWN_DEVICE = "UnknownDevice"

# feature name -> DeviceSpec attribute
FEATURE_FIELDS = {
    "tracking_hz": "tracking_rate_hz",
    "refresh_hz": "hmd_refresh_hz",
    "resolution_mp": "resolution_mp",
    "fov_deg": "fov_deg",
}


def rate_from_timestamps(ts) -> float:
    """Dominant sampling rate of a timestamp series, in whole Hz.

    The mode of a 1 Hz histogram of 1/dt finds the rate; the median gap among
    gaps within half a period of it then sets the value, since the mode of
    1/dt is skewed by timing jitter.
    """
    gaps = np.diff(np.asarray(ts, float))
    gaps = gaps[gaps > 0]
    if gaps.size == 0:
        raise TooFewFrames("need at least two distinct timestamps")
    bins = np.rint(1.0 / gaps).astype(np.int64)
    values, counts = np.unique(bins, return_counts=True)
    mode = float(values[np.argmax(counts)])
    if mode <= 0:
        return 0.0
    near = gaps[np.abs(gaps * mode - 1.0) < 0.5]
    return float(round(1.0 / float(np.median(near))))


def fresh_frames(trace: TelemetryTrace) -> np.ndarray:
    """Mask of frames whose poses differ from the previous frame (drops stale polls)."""
    keep = np.ones(len(trace), bool)
    if len(trace) > 1:
        same = (trace.pos[1:] == trace.pos[:-1]).all(axis=(1, 2)) & (trace.quat[1:] == trace.quat[:-1]).all(axis=(1, 2))
        keep[1:] = ~same
    return keep


def estimate_tracking_rate(trace: TelemetryTrace, min_frames: int = MIN_FRAMES) -> float:
    if len(trace) < min_frames:
        raise TooFewFrames(f"need at least {min_frames} frames, got {len(trace)}")
    ts = trace.t[fresh_frames(trace)]
    if ts.size < 2:
        raise TooFewFrames("fewer than two distinct poses")
    return rate_from_timestamps(ts)


def estimate_refresh_rate(device_api: DeviceApiSample | None) -> float:
    if device_api is None:
        raise CapabilityDenied("render timestamps need device API access")
    return rate_from_timestamps(device_api.render_timestamps)


def refresh_band(events: Sequence[EventRecord], rates=pz.UFO_RATES_HZ) -> tuple[float, float]:
    """[lo, hi) refresh band implied by how many balloon speeds the player told apart."""
    answers = [e for e in events if e.kind is EventKind.UFO_ANSWER]
    if not answers:
        raise MissingUfoAnswer("no UfoAnswer event")
    k = int(answers[-1].payload["distinct_count"])
    rates = sorted(rates)
    if not 0 <= k <= len(rates):
        raise InvalidValue(f"distinct_count {k} outside 0..{len(rates)}")
    lo = 0.0 if k == 0 else float(rates[k - 1])
    hi = float(rates[k]) if k < len(rates) else math.inf
    return lo, hi


def estimate_refresh(bundle: SessionBundle):
    """Exact rate when the tier reads render callbacks, otherwise the UFO band."""
    if bundle.attacker_tier.reads_device_api and bundle.device_api is not None:
        return estimate_refresh_rate(bundle.device_api)
    return refresh_band(bundle.events)


def classify_device(features: Mapping[str, float], table: Sequence) -> str:
    """Nearest table row under L1 distance with each feature scaled by its table range."""
    if not table:
        raise EmptyTable("device table is empty")
    if features.get("tracking_hz") is None:
        raise InvalidValue("tracking_hz is required")
    used = [k for k in FEATURE_FIELDS if features.get(k) is not None]
    cols = {k: np.array([float(getattr(d, FEATURE_FIELDS[k])) for d in table]) for k in used}
    dist = np.zeros(len(table))
    for k in used:
        span = float(cols[k].max() - cols[k].min()) or 1.0
        dist += np.abs(cols[k] - float(features[k])) / span
    order = np.argsort(dist, kind="stable")
    if len(table) > 1 and dist[order[1]] - dist[order[0]] <= 1e-9:
        return UNKNOWN_DEVICE
    return table[int(order[0])].model


def host_tier(cpu_ghz: float, gpu_mhs: float) -> str:
    if cpu_ghz < 0 or gpu_mhs < 0:
        raise InvalidValue("host benchmark readings must be non-negative")
    if gpu_mhs >= 80 and cpu_ghz >= 4.0:
        return "highend"
    if gpu_mhs < 30:
        return "budget"
    return "midrange"
