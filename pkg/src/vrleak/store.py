"""On-disk layout for simulated populations and attack reports.

A population directory holds ``manifest.json`` plus one directory per user::

    <pop>/manifest.json
    <pop>/<user_id>/profile.json
    <pop>/<user_id>/trace.csv
    <pop>/<user_id>/events.jsonl
    <pop>/<user_id>/latency.json
    <pop>/<user_id>/device_api.json     # JSON null when the tier cannot read it
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import FormatError, InvalidValue
from .simulate import UserProfile
from .telemetry import (
    AttributeReport,
    DeviceApiSample,
    SessionBundle,
    Tier,
    parse_events_jsonl,
    parse_latency_json,
    parse_trace_csv,
    write_events_jsonl,
    write_latency_json,
    write_trace_csv,
)

MANIFEST = "manifest.json"
SESSION_FILES = ("profile.json", "trace.csv", "events.jsonl", "latency.json", "device_api.json")


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def load_json(path: Path):
    """Read a JSON file; syntax errors surface as FormatError with a line number."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def write_session(directory: Path, profile: UserProfile, bundle: SessionBundle) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "profile.json").write_text(profile.dumps(), encoding="utf-8")
    (d / "trace.csv").write_bytes(write_trace_csv(bundle.trace))
    (d / "events.jsonl").write_bytes(write_events_jsonl(bundle.events))
    (d / "latency.json").write_bytes(write_latency_json(bundle.latency))
    api = None if bundle.device_api is None else bundle.device_api.to_json()
    (d / "device_api.json").write_text(dump_json(api), encoding="utf-8")


def _wrap(path: Path, fn, data):
    try:
        return fn(data)
    except FormatError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def read_session(directory: Path, tier: Tier | str = Tier.PRIVILEGED_II) -> SessionBundle:
    """Load a session as seen by ``tier``; a device API file is ignored for tiers that cannot read it."""
    d = Path(directory)
    tier = Tier(tier)
    trace = _wrap(d / "trace.csv", parse_trace_csv, (d / "trace.csv").read_bytes())
    events = _wrap(d / "events.jsonl", parse_events_jsonl, (d / "events.jsonl").read_bytes())
    latency = _wrap(d / "latency.json", parse_latency_json, (d / "latency.json").read_bytes())
    api = None
    if tier.reads_device_api and (d / "device_api.json").exists():
        obj = load_json(d / "device_api.json")
        if obj is not None:
            try:
                api = DeviceApiSample.from_json(obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{d / 'device_api.json'}: {exc}") from None
    return SessionBundle(trace, tuple(events), api, tuple(latency), Tier.PRIVILEGED_II if api else tier)


def read_profile(directory: Path) -> UserProfile:
    path = Path(directory) / "profile.json"
    try:
        return UserProfile.from_json(load_json(path))
    except (KeyError, TypeError, InvalidValue) as exc:
        raise FormatError(f"{path}: {exc}") from None


def is_population(directory: Path) -> bool:
    return (Path(directory) / MANIFEST).is_file()


def population_users(directory: Path) -> list[str]:
    manifest = load_json(Path(directory) / MANIFEST)
    return list(manifest["users"])


def read_reports(directory: Path) -> dict[str, AttributeReport]:
    out = {}
    for path in sorted(Path(directory).glob("*.json")):
        try:
            rep = AttributeReport.from_json(load_json(path))
        except (KeyError, TypeError, InvalidValue) as exc:
            raise FormatError(f"{path}: {exc}") from None
        out[path.stem] = rep
    return out
