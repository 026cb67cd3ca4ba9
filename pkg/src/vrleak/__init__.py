"""Telemetry-based privacy attacks on VR users, with a ground-truth simulator."""

from .telemetry import (
    AttributeReport,
    DeviceApiSample,
    EventKind,
    EventRecord,
    LatencySample,
    SessionBundle,
    TelemetryTrace,
    Tier,
    parse_events_jsonl,
    parse_trace_csv,
    write_events_jsonl,
    write_trace_csv,
)
from .simulate import NoiseModel, ScenarioScript, UserProfile, default_script, sample_population, simulate_session
from .pipeline import AttackContext, evaluate, run_attacks

__version__ = "0.1.0"
