"""Shared data types and the on-disk formats for traces, events and reports.

Coordinates are meters in a right-handed frame with +Y up. Orientations are
unit quaternions stored (w, x, y, z). Times are seconds since session start.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from .errors import (
    InvalidValue,
    MalformedLine,
    MalformedRow,
    NonMonotonicTime,
    PuzzleIdOutOfRange,
    UnknownKind,
    UnnormalizedQuaternion,
)

DEVICES = ("hmd", "left", "right")
HMD, LEFT, RIGHT = 0, 1, 2

# hx,hy,hz,hqw,hqx,hqy,hqz then the same for l and r
TRACE_COLUMNS = ("t",) + tuple(
    f"{p}{c}" for p in "hlr" for c in ("x", "y", "z", "qw", "qx", "qy", "qz")
)

QUAT_TOL = 1e-6
QUAT_PARSE_TOL = 1e-3
FLOAT_DIGITS = 9


class Tier(str, enum.Enum):
    PRIVILEGED_I = "PrivilegedI"
    PRIVILEGED_II = "PrivilegedII"
    PRIVILEGED_III = "PrivilegedIII"
    NON_PRIVILEGED = "NonPrivileged"

    @property
    def reads_device_api(self) -> bool:
        return self in (Tier.PRIVILEGED_I, Tier.PRIVILEGED_II)

    @property
    def reads_network(self) -> bool:
        return self in (Tier.PRIVILEGED_II, Tier.PRIVILEGED_III)

    @property
    def full_rate_telemetry(self) -> bool:
        return self in (Tier.PRIVILEGED_I, Tier.PRIVILEGED_II)


class EventKind(str, enum.Enum):
    PUZZLE_ENTER = "PuzzleEnter"
    STIMULUS_SHOWN = "StimulusShown"
    BUTTON_PRESS = "ButtonPress"
    SPOKEN_PASSWORD = "SpokenPassword"
    UFO_ANSWER = "UfoAnswer"
    READ_ATTEMPT = "ReadAttempt"


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.position) != 3 or not _finite(*self.position):
            raise InvalidValue(f"position must be 3 finite numbers, got {self.position}")
        if len(self.orientation) != 4 or not _finite(*self.orientation):
            raise InvalidValue("orientation must be 4 finite numbers")
        norm = math.sqrt(sum(q * q for q in self.orientation))
        if abs(norm - 1.0) > QUAT_TOL:
            raise InvalidValue(f"quaternion norm {norm} is not 1")


@dataclass(frozen=True)
class TelemetryFrame:
    t: float
    hmd: Pose
    left: Pose
    right: Pose

    def __post_init__(self):
        if not math.isfinite(self.t) or self.t < 0:
            raise InvalidValue(f"frame time must be finite and >= 0, got {self.t}")


class TelemetryTrace:
    """An immutable, array-backed sequence of telemetry frames.

    ``pos`` has shape (n, 3, 3) indexed [frame, device, axis] and ``quat`` has
    shape (n, 3, 4), devices ordered hmd, left, right.
    """

    __slots__ = ("t", "pos", "quat", "nominal_rate_hz")

    def __init__(self, t, pos, quat=None, nominal_rate_hz: float | None = None):
        t = np.array(t, dtype=np.float64)
        pos = np.array(pos, dtype=np.float64)
        if quat is None:
            quat = np.zeros(pos.shape[:2] + (4,))
            quat[..., 0] = 1.0
        quat = np.array(quat, dtype=np.float64)
        n = t.shape[0] if t.ndim == 1 else -1
        if n < 1:
            raise InvalidValue("a trace needs at least one frame")
        if pos.shape != (n, 3, 3) or quat.shape != (n, 3, 4):
            raise InvalidValue(f"bad array shapes {t.shape} {pos.shape} {quat.shape}")
        if not (np.isfinite(t).all() and np.isfinite(pos).all() and np.isfinite(quat).all()):
            raise InvalidValue("trace contains non-finite values")
        if t[0] < 0:
            raise InvalidValue("frame times must be >= 0")
        if n > 1 and not (np.diff(t) > 0).all():
            raise NonMonotonicTime("frame times must be strictly increasing")
        norms = np.linalg.norm(quat, axis=-1)
        if np.abs(norms - 1.0).max() > QUAT_TOL:
            raise InvalidValue("quaternions must have unit norm")
        if nominal_rate_hz is not None and not nominal_rate_hz > 0:
            raise InvalidValue("nominal rate must be positive")
        for a in (t, pos, quat):
            a.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "quat", quat)
        object.__setattr__(self, "nominal_rate_hz", nominal_rate_hz)

    def __setattr__(self, name, value):
        raise AttributeError("TelemetryTrace is immutable")

    @classmethod
    def from_frames(cls, frames: Iterable[TelemetryFrame], nominal_rate_hz=None) -> "TelemetryTrace":
        frames = list(frames)
        t = [f.t for f in frames]
        pos = [[f.hmd.position, f.left.position, f.right.position] for f in frames]
        quat = [[f.hmd.orientation, f.left.orientation, f.right.orientation] for f in frames]
        return cls(t, pos, quat, nominal_rate_hz)

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> TelemetryFrame:
        poses = [
            Pose(tuple(self.pos[i, d].tolist()), tuple(self.quat[i, d].tolist()))
            for d in range(3)
        ]
        return TelemetryFrame(float(self.t[i]), *poses)

    def __iter__(self) -> Iterator[TelemetryFrame]:
        for i in range(len(self)):
            yield self[i]

    @property
    def frames(self) -> list[TelemetryFrame]:
        return list(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TelemetryTrace):
            return NotImplemented
        return (
            np.array_equal(self.t, other.t)
            and np.array_equal(self.pos, other.pos)
            and np.array_equal(self.quat, other.quat)
            and self.nominal_rate_hz == other.nominal_rate_hz
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"TelemetryTrace(n={len(self)}, span={self.duration:.3f}s)"

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def select(self, mask) -> "TelemetryTrace":
        """Frames where ``mask`` (boolean array or index array) holds."""
        return TelemetryTrace(self.t[mask], self.pos[mask], self.quat[mask], self.nominal_rate_hz)

    def window_mask(self, t0: float, t1: float) -> np.ndarray:
        return (self.t >= t0) & (self.t <= t1)

    def replace(self, t=None, pos=None, quat=None, nominal_rate_hz=...) -> "TelemetryTrace":
        return TelemetryTrace(
            self.t if t is None else t,
            self.pos if pos is None else pos,
            self.quat if quat is None else quat,
            self.nominal_rate_hz if nominal_rate_hz is ... else nominal_rate_hz,
        )


@dataclass(frozen=True)
class EventRecord:
    t: float
    kind: EventKind
    puzzle_id: int
    payload: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.t, (int, float)) or not math.isfinite(self.t):
            raise InvalidValue(f"event time must be finite, got {self.t!r}")
        try:
            object.__setattr__(self, "kind", EventKind(self.kind))
        except ValueError:
            raise UnknownKind(f"unknown event kind {self.kind!r}") from None
        if isinstance(self.puzzle_id, bool) or not isinstance(self.puzzle_id, int):
            raise InvalidValue(f"puzzle_id must be an integer, got {self.puzzle_id!r}")
        if not 1 <= self.puzzle_id <= 24:
            raise PuzzleIdOutOfRange(f"puzzle_id {self.puzzle_id} outside 1..24")
        if not isinstance(self.payload, Mapping):
            raise InvalidValue("payload must be a mapping")
        object.__setattr__(self, "payload", dict(self.payload))
        if self.kind is EventKind.BUTTON_PRESS and self.payload.get("hand") not in ("left", "right"):
            raise InvalidValue(f"ButtonPress.hand must be left or right, got {self.payload.get('hand')!r}")

    __hash__ = None

    def to_json(self) -> dict:
        return {"t": self.t, "kind": self.kind.value, "puzzle_id": self.puzzle_id, "payload": self.payload}


@dataclass(frozen=True)
class DeviceApiSample:
    """Values a privileged attacker reads straight from device and host APIs.

    ``cpu_ghz``/``gpu_mhs`` are host benchmark readings; they are optional
    because host benchmarking happens outside this package.
    """

    ipd_m: float
    render_timestamps: tuple[float, ...]
    reported_resolution_mp: float
    reported_fov_deg: float
    cpu_ghz: float | None = None
    gpu_mhs: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "render_timestamps", tuple(float(x) for x in self.render_timestamps))
        values = [self.ipd_m, self.reported_resolution_mp, self.reported_fov_deg, *self.render_timestamps]
        values += [v for v in (self.cpu_ghz, self.gpu_mhs) if v is not None]
        if not _finite(*values):
            raise InvalidValue("device API sample contains non-finite values")
        if not 0.050 <= self.ipd_m <= 0.080:
            raise InvalidValue(f"ipd {self.ipd_m} m outside [0.050, 0.080]")
        ts = np.asarray(self.render_timestamps)
        if ts.size > 1 and not (np.diff(ts) > 0).all():
            raise NonMonotonicTime("render timestamps must be strictly increasing")

    def to_json(self) -> dict:
        out = {
            "ipd_m": self.ipd_m,
            "render_timestamps": list(self.render_timestamps),
            "reported_resolution_mp": self.reported_resolution_mp,
            "reported_fov_deg": self.reported_fov_deg,
        }
        if self.cpu_ghz is not None:
            out["cpu_ghz"] = self.cpu_ghz
        if self.gpu_mhs is not None:
            out["gpu_mhs"] = self.gpu_mhs
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "DeviceApiSample":
        return cls(
            ipd_m=_num(obj["ipd_m"]),
            render_timestamps=[_num(x) for x in obj["render_timestamps"]],
            reported_resolution_mp=_num(obj["reported_resolution_mp"]),
            reported_fov_deg=_num(obj["reported_fov_deg"]),
            cpu_ghz=None if obj.get("cpu_ghz") is None else _num(obj["cpu_ghz"]),
            gpu_mhs=None if obj.get("gpu_mhs") is None else _num(obj["gpu_mhs"]),
        )


@dataclass(frozen=True)
class LatencySample:
    server_id: str
    rtt_s: float
    t: float = 0.0

    def __post_init__(self):
        if not _finite(self.rtt_s, self.t):
            raise InvalidValue("latency sample contains non-finite values")
        # a co-located server with no processing delay legitimately yields 0
        if self.rtt_s < 0:
            raise InvalidValue(f"rtt must be non-negative, got {self.rtt_s}")

    def to_json(self) -> dict:
        return {"server_id": self.server_id, "rtt_s": self.rtt_s, "t": self.t}


@dataclass(frozen=True)
class SessionBundle:
    trace: TelemetryTrace
    events: tuple[EventRecord, ...]
    device_api: DeviceApiSample | None
    latency: tuple[LatencySample, ...]
    attacker_tier: Tier = Tier.PRIVILEGED_II

    def __post_init__(self):
        object.__setattr__(self, "attacker_tier", Tier(self.attacker_tier))
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: e.t)))
        object.__setattr__(self, "latency", tuple(self.latency))
        if self.device_api is not None and not self.attacker_tier.reads_device_api:
            raise InvalidValue(
                f"{self.attacker_tier.value} sessions cannot carry device API samples"
            )

    __hash__ = None


@dataclass(frozen=True)
class AttributeValue:
    value: Any
    unit: str
    confidence: float
    source: str

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidValue(f"confidence {self.confidence} outside [0, 1]")
        if not self.source:
            raise InvalidValue("every attribute needs a source attack id")

    def to_json(self) -> dict:
        return {"value": self.value, "unit": self.unit, "confidence": self.confidence, "source": self.source}


class AttributeReport:
    """Recovered attributes for one session, each tagged with the attack that produced it."""

    def __init__(self, session_id: str = "", tier: Tier | str = Tier.PRIVILEGED_II):
        self.session_id = session_id
        self.tier = Tier(tier)
        self.attributes: dict[str, AttributeValue] = {}
        self.errors: dict[str, str] = {}

    def add(self, name: str, value, unit: str = "", confidence: float = 1.0, source: str = ""):
        if name in self.attributes:
            raise InvalidValue(f"attribute {name!r} reported twice")
        self.attributes[name] = AttributeValue(value, unit, float(confidence), source)

    def __contains__(self, name: str) -> bool:
        return name in self.attributes

    def __getitem__(self, name: str) -> AttributeValue:
        return self.attributes[name]

    def get(self, name: str, default=None):
        a = self.attributes.get(name)
        return default if a is None else a.value

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "tier": self.tier.value,
            "attributes": {k: v.to_json() for k, v in sorted(self.attributes.items())},
            "errors": dict(sorted(self.errors.items())),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "AttributeReport":
        rep = cls(obj.get("session_id", ""), obj.get("tier", Tier.PRIVILEGED_II))
        for name, a in obj.get("attributes", {}).items():
            rep.add(name, a["value"], a.get("unit", ""), a.get("confidence", 1.0), a["source"])
        rep.errors.update(obj.get("errors", {}))
        return rep

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"


# ---------------------------------------------------------------- trace CSV


def _num(text) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def _checked_rows(text: str) -> list[list[float]]:
    """Row-by-row parse that reports the first bad line."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRow("empty file, expected a header", line=1) from None
    if tuple(h.strip() for h in header) != TRACE_COLUMNS:
        raise MalformedRow("header does not match the trace schema", line=1)

    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(TRACE_COLUMNS):
            raise MalformedRow(f"expected {len(TRACE_COLUMNS)} columns, got {len(row)}", line=lineno)
        try:
            rows.append([_num(x) for x in row])
        except ValueError as exc:
            raise MalformedRow(f"non-numeric or non-finite field ({exc})", line=lineno) from None
    if not rows:
        raise MalformedRow("no data rows after header (zero frames)", line=2)
    return rows


def _fast_rows(text: str) -> np.ndarray | None:
    """Vectorized parse of a well-formed file; None sends the caller to the checked path."""
    lines = text.splitlines()
    if not lines or tuple(h.strip() for h in lines[0].split(",")) != TRACE_COLUMNS:
        return None
    body = [ln for ln in lines[1:] if ln]
    if not body or any(ln.count(",") != len(TRACE_COLUMNS) - 1 for ln in body):
        return None
    try:
        a = np.array(",".join(body).split(","), dtype=np.float64)
    except ValueError:
        return None
    if not np.isfinite(a).all():
        return None
    return a.reshape(len(body), len(TRACE_COLUMNS))


def parse_trace_csv(data: bytes | str, nominal_rate_hz: float | None = None) -> TelemetryTrace:
    """Parse the 22-column trace CSV. Raises on the first bad line, with its line number."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    a = _fast_rows(text)
    if a is None:
        a = np.array(_checked_rows(text))
    t = a[:, 0]
    body = a[:, 1:].reshape(-1, 3, 7)
    pos, quat = body[:, :, :3], body[:, :, 3:]

    bad_t = np.flatnonzero(t < 0)
    if bad_t.size:
        raise NonMonotonicTime(f"line {bad_t[0] + 2}: negative frame time")
    back = np.flatnonzero(np.diff(t) <= 0)
    if back.size:
        raise NonMonotonicTime(f"line {back[0] + 3}: time does not increase")

    dev = np.abs(np.linalg.norm(quat, axis=-1) - 1.0)
    if dev.max() > QUAT_PARSE_TOL:
        row = int(np.argmax(dev.max(axis=1)))
        raise UnnormalizedQuaternion(f"line {row + 2}: quaternion norm off by {dev.max():.3g}")
    if dev.max() > QUAT_TOL:
        quat = quat / np.linalg.norm(quat, axis=-1, keepdims=True)
    return TelemetryTrace(t, pos, quat, nominal_rate_hz)


def write_trace_csv(trace: TelemetryTrace) -> bytes:
    """Serialize with 9 significant digits; the output re-parses to an equal trace
    whenever the input values are themselves representable at that precision."""
    body = np.concatenate([trace.t[:, None], np.concatenate([trace.pos, trace.quat], axis=2).reshape(len(trace), 21)], axis=1)
    row = ",".join([f"%.{FLOAT_DIGITS}g"] * len(TRACE_COLUMNS))
    lines = [",".join(TRACE_COLUMNS)] + [row % tuple(r) for r in body.tolist()]
    return ("\n".join(lines) + "\n").encode("utf-8")


def quantize_trace(trace: TelemetryTrace) -> TelemetryTrace:
    """The trace as it would come back from a CSV round trip."""
    return parse_trace_csv(write_trace_csv(trace), trace.nominal_rate_hz)


# ------------------------------------------------------------- events JSONL


def _check_finite_json(obj, lineno):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise MalformedLine("NaN/Inf is not allowed", line=lineno)
    if isinstance(obj, dict):
        for v in obj.values():
            _check_finite_json(v, lineno)
    elif isinstance(obj, list):
        for v in obj:
            _check_finite_json(v, lineno)


def parse_events_jsonl(data: bytes | str) -> list[EventRecord]:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(f"invalid JSON ({exc.msg})", line=lineno) from None
        if not isinstance(obj, dict) or not {"t", "kind", "puzzle_id"} <= obj.keys():
            raise MalformedLine("expected an object with t, kind, puzzle_id", line=lineno)
        _check_finite_json(obj, lineno)
        if obj["kind"] not in {k.value for k in EventKind}:
            raise UnknownKind(f"line {lineno}: unknown event kind {obj['kind']!r}")
        try:
            records.append(EventRecord(obj["t"], obj["kind"], obj["puzzle_id"], obj.get("payload", {})))
        except InvalidValue as exc:
            raise MalformedLine(str(exc), line=lineno) from None
        except PuzzleIdOutOfRange as exc:
            raise PuzzleIdOutOfRange(f"line {lineno}: {exc}") from None
    # stable: equal-time events keep file order
    return sorted(records, key=lambda e: e.t)


def write_events_jsonl(events: Iterable[EventRecord]) -> bytes:
    lines = [json.dumps(e.to_json(), separators=(",", ":")) for e in events]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def parse_latency_json(data: bytes | str) -> list[LatencySample]:
    obj = json.loads(data)
    out = []
    for item in obj:
        out.append(LatencySample(str(item["server_id"]), _num(item["rtt_s"]), _num(item.get("t", 0.0))))
    return out


def write_latency_json(samples: Iterable[LatencySample]) -> bytes:
    return (json.dumps([s.to_json() for s in samples], indent=1) + "\n").encode("utf-8")


# ------------------------------------------------------------- quaternions

# Local forward axis of the HMD; rotate it by the pose orientation for gaze.
FORWARD_AXIS = (0.0, 0.0, -1.0)


def quat_from_yaw_pitch(yaw, pitch=0.0) -> np.ndarray:
    """Yaw about +Y then pitch about the local +X (positive pitch looks up).

    Broadcasts; returns (..., 4) in (w, x, y, z) order.
    """
    yaw, pitch = np.broadcast_arrays(np.asarray(yaw, float), np.asarray(pitch, float))
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    return np.stack([cy * cp, cy * sp, sy * cp, -sy * sp], axis=-1)


def quat_multiply(a, b) -> np.ndarray:
    a, b = np.asarray(a, float), np.asarray(b, float)
    w1, x1, y1, z1 = np.moveaxis(a, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(b, -1, 0)
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector(s) ``v`` by unit quaternion(s) ``q``."""
    q, v = np.asarray(q, float), np.asarray(v, float)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)
