"""Which inputs each attacker tier may read, and which attributes it may report."""

from __future__ import annotations

import numpy as np

from .errors import CapabilityLeak
from .telemetry import SessionBundle, TelemetryTrace, Tier

NETWORK_BROADCAST_HZ = 30.0

_ALL = frozenset(Tier)
_LOCAL = frozenset({Tier.PRIVILEGED_I, Tier.PRIVILEGED_II})
_NETWORK = frozenset({Tier.PRIVILEGED_II, Tier.PRIVILEGED_III})
_REMOTE = frozenset({Tier.PRIVILEGED_III, Tier.NON_PRIVILEGED})

# Telemetry- and behavior-derived attributes survive down to the non-privileged
# tier (in degraded form); device and host readings need local API access;
# RTT-based location needs a network vantage point.
ATTRIBUTE_TIERS: dict[str, frozenset] = {
    "height": _ALL,
    "wingspan": _ALL,
    "longer_arm": _ALL,
    "room_length": _ALL,
    "room_width": _ALL,
    "room_area": _ALL,
    "handedness": _ALL,
    "fitness": _ALL,
    "reaction_time": _ALL,
    "reaction_class": _ALL,
    "moca_total": _ALL,
    "moca_pass": _ALL,
    "colorblind": _ALL,
    "languages": _ALL,
    "hyperopia": _ALL,
    "session_duration": _ALL,
    "myopia": _ALL,
    "refresh_band": _REMOTE,
    "ipd": _LOCAL,
    "tracking_rate": _LOCAL,
    "refresh_rate": _LOCAL,
    "resolution": _LOCAL,
    "fov": _LOCAL,
    "device_model": _LOCAL,
    "host_tier": _LOCAL,
    "geo_lat": _NETWORK,
    "geo_lon": _NETWORK,
    "geo_residual": _NETWORK,
    "gender": _ALL,
    "age": _ALL,
    "ethnicity": _ALL,
    "disability": _ALL,
    "identity_match": _ALL,
}


def allowed(attribute: str, tier: Tier | str) -> bool:
    return Tier(tier) in ATTRIBUTE_TIERS.get(attribute, frozenset())


def check_report(report) -> None:
    """Raise CapabilityLeak if the report holds anything its tier cannot observe."""
    leaks = sorted(a for a in report.attributes if not allowed(a, report.tier))
    if leaks:
        raise CapabilityLeak(f"{report.tier.value} report contains {leaks}")


def downsample(trace: TelemetryTrace, rate_hz: float = NETWORK_BROADCAST_HZ) -> TelemetryTrace:
    """Relay the latest pose at each tick of a fixed-rate broadcast clock."""
    t0, t1 = float(trace.t[0]), float(trace.t[-1])
    ticks = t0 + np.arange(int(np.floor((t1 - t0) * rate_hz + 1e-9)) + 1) / rate_hz
    idx = np.searchsorted(trace.t, ticks, side="right") - 1
    return TelemetryTrace(ticks, trace.pos[idx], trace.quat[idx], rate_hz)


def mask_for_tier(bundle: SessionBundle, tier: Tier | str) -> SessionBundle:
    """The view of ``bundle`` available to ``tier``."""
    tier = Tier(tier)
    trace = bundle.trace
    if not tier.full_rate_telemetry and trace.nominal_rate_hz != NETWORK_BROADCAST_HZ:
        trace = downsample(trace)
    return SessionBundle(
        trace=trace,
        events=bundle.events,
        device_api=bundle.device_api if tier.reads_device_api else None,
        latency=bundle.latency if tier.reads_network else (),
        attacker_tier=tier,
    )
