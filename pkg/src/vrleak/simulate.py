"""Synthetic participants and scripted play-throughs with known ground truth.

Every attribute an attack recovers has a generating value here, so the
evaluation harness can score recovery exactly.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import zlib
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from . import puzzles as pz
from .capabilities import mask_for_tier
from .environment import PropagationModel, ServerSite, great_circle_m, load_servers
from .errors import EmptyScript, InvalidValue
from .telemetry import (
    DeviceApiSample,
    EventKind,
    EventRecord,
    LatencySample,
    SessionBundle,
    TelemetryTrace,
    Tier,
    quat_from_yaw_pitch,
)

PRIMITIVES = (
    "stand", "turn", "t_pose", "squat_x3", "button_press",
    "explore_room", "read_near", "read_far", "gaze_panel", "idle",
)

SHOULDER_DROP_M = 0.15
DOMINANT_PRESS_PROB = 0.97
SQUAT_RATIO = {"low": 0.15, "moderate": 0.30, "high": 0.45}
DEFAULT_SESSION_DATE = "2022-06-14"
LANGUAGE_CODES = ("hi", "zh", "fr", "ja", "ru", "es", "pt", "ar")
PRESS_DURATION_S = 0.5
RENDER_WINDOW_S = 10.0

# probability that the close / far sentence is unreadable, by condition
CLOSE_FAIL = {"none": 0.10, "mild": 0.45, "severe": 0.85}
FAR_FAIL = {"none": 0.10, "mild": 0.50, "severe": 0.90}


# ------------------------------------------------------------------ devices


@dataclass(frozen=True)
class DeviceSpec:
    model: str
    hmd_refresh_hz: float
    tracking_rate_hz: float
    resolution_mp: float
    fov_deg: float
    ipd_readout_sigma_m: float = 0.0
    ipd_steps_m: tuple[float, ...] = ()
    validated: bool = True

    def __post_init__(self):
        object.__setattr__(self, "ipd_steps_m", tuple(float(s) for s in self.ipd_steps_m))
        for name in ("hmd_refresh_hz", "tracking_rate_hz", "resolution_mp", "fov_deg"):
            if not getattr(self, name) > 0:
                raise InvalidValue(f"{name} must be positive")
        if self.ipd_readout_sigma_m < 0:
            raise InvalidValue("ipd readout sigma must be non-negative")

    def to_json(self) -> dict:
        d = asdict(self)
        d["ipd_steps_m"] = list(self.ipd_steps_m)
        return d

    @classmethod
    def from_json(cls, obj: Mapping) -> "DeviceSpec":
        return cls(**{k: obj[k] for k in cls.__dataclass_fields__ if k in obj})


def load_devices(path=None) -> list[DeviceSpec]:
    if path is None:
        text = resources.files("vrleak").joinpath("data/devices.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    table = [DeviceSpec.from_json(d) for d in json.loads(text)["devices"]]
    names = [d.model for d in table]
    if len(set(names)) != len(names):
        raise InvalidValue("device models must be unique")
    return table


def device_by_model(model: str, table: Sequence[DeviceSpec] | None = None) -> DeviceSpec:
    for d in table or load_devices():
        if d.model == model:
            return d
    raise InvalidValue(f"unknown device model {model!r}")


# ------------------------------------------------------------------ profile


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    height_m: float
    wingspan_m: float
    arm_left_m: float
    arm_right_m: float
    handedness: str
    ipd_m: float
    fitness: str
    reaction_time_s: float
    room_length_m: float
    room_width_m: float
    location: tuple[float, float]
    device: DeviceSpec
    languages: frozenset
    colorblind: bool
    hyperopia: str
    myopia: str
    moca_answers: Mapping[str, int]
    gender: str
    age_years: int
    ethnicity: str
    disability: str
    session_duration_s: float = 600.0
    host_cpu_ghz: float = 4.2
    host_gpu_mhs: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "languages", frozenset(self.languages))
        object.__setattr__(self, "location", tuple(float(v) for v in self.location))
        object.__setattr__(self, "moca_answers", dict(self.moca_answers))
        if not 0.9 * self.height_m <= self.wingspan_m <= 1.15 * self.height_m:
            raise InvalidValue("wingspan outside [0.9, 1.15] x height")
        if abs(self.arm_left_m - self.arm_right_m) > 0.06 + 1e-12:
            raise InvalidValue("arm lengths differ by more than 6 cm")
        if not 0.12 <= self.reaction_time_s <= 0.60:
            raise InvalidValue("reaction time outside [0.12, 0.60] s")
        if self.shoulder_half_width_m <= 0:
            raise InvalidValue("arms longer than the wingspan allows")
        if self.handedness not in ("left", "right"):
            raise InvalidValue("handedness must be left or right")
        if self.fitness not in SQUAT_RATIO:
            raise InvalidValue(f"unknown fitness class {self.fitness!r}")
        if self.hyperopia not in CLOSE_FAIL or self.myopia not in FAR_FAIL:
            raise InvalidValue("eyesight must be none, mild or severe")
        if self.disability not in ("none", "mental", "physical"):
            raise InvalidValue(f"unknown disability {self.disability!r}")
        if self.gender not in ("male", "female"):
            raise InvalidValue(f"unknown gender {self.gender!r}")
        if not set(self.languages) <= set(LANGUAGE_CODES):
            raise InvalidValue(f"unknown language codes {sorted(set(self.languages) - set(LANGUAGE_CODES))}")
        if self.room_length_m <= 0 or self.room_width_m <= 0 or self.session_duration_s <= 0:
            raise InvalidValue("room sides and session duration must be positive")

    @property
    def shoulder_half_width_m(self) -> float:
        return (self.wingspan_m - self.arm_left_m - self.arm_right_m) / 2.0

    @property
    def room_area_m2(self) -> float:
        return self.room_length_m * self.room_width_m

    @property
    def longer_arm(self) -> str:
        d = self.arm_left_m - self.arm_right_m
        if abs(d) < 0.01 - 1e-9:
            return "undetermined"
        return "left_longer" if d > 0 else "right_longer"

    @property
    def moca_total(self) -> int:
        from .behavior import moca_total_from_answers
        return moca_total_from_answers(self.moca_answers)

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["location"] = list(self.location)
        d["device"] = self.device.to_json()
        d["languages"] = sorted(self.languages)
        d["moca_answers"] = dict(sorted(self.moca_answers.items()))
        return d

    @classmethod
    def from_json(cls, obj: Mapping) -> "UserProfile":
        d = dict(obj)
        d["device"] = DeviceSpec.from_json(d["device"])
        d["languages"] = frozenset(d["languages"])
        d["location"] = tuple(d["location"])
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"


# ------------------------------------------------------------------ script


@dataclass(frozen=True)
class Segment:
    puzzle_id: int
    duration_s: float
    primitive: str

    def __post_init__(self):
        if not 1 <= self.puzzle_id <= 24:
            raise InvalidValue(f"puzzle id {self.puzzle_id} outside 1..24")
        if not self.duration_s > 0:
            raise InvalidValue("segment duration must be positive")
        if self.primitive not in PRIMITIVES:
            raise InvalidValue(f"unknown motion primitive {self.primitive!r}")


@dataclass(frozen=True)
class ScenarioScript:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def duration_s(self) -> float:
        return float(sum(s.duration_s for s in self.segments))

    def scaled(self, factor: float) -> "ScenarioScript":
        return ScenarioScript(tuple(replace(s, duration_s=s.duration_s * factor) for s in self.segments))

    def puzzle_spans(self) -> dict[int, tuple[float, float]]:
        """Nominal [start, end) of each puzzle, merging consecutive segments."""
        spans: dict[int, tuple[float, float]] = {}
        t = 0.0
        for s in self.segments:
            lo, _ = spans.get(s.puzzle_id, (t, t))
            spans[s.puzzle_id] = (lo, t + s.duration_s)
            t += s.duration_s
        return spans

    def primitives_of(self, puzzle_id: int) -> set[str]:
        return {s.primitive for s in self.segments if s.puzzle_id == puzzle_id}

    def to_json(self) -> dict:
        return {"segments": [asdict(s) for s in self.segments]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "ScenarioScript":
        return cls(tuple(Segment(int(s["puzzle_id"]), float(s["duration_s"]), s["primitive"]) for s in obj["segments"]))


_DEFAULT_SEGMENTS = (
    (1, 20, "stand"), (2, 8, "turn"), (2, 52, "explore_room"), (3, 18, "stand"),
    (4, 20, "stand"), (5, 20, "stand"), (6, 24, "button_press"), (7, 40, "stand"),
    (8, 32, "t_pose"), (9, 30, "squat_x3"), (10, 22, "stand"), (11, 30, "button_press"),
    (12, 14, "turn"), (13, 26, "gaze_panel"), (14, 24, "stand"), (15, 26, "stand"),
    (16, 20, "stand"), (17, 26, "stand"), (18, 30, "stand"), (19, 22, "stand"),
    (20, 24, "idle"), (21, 16, "stand"), (22, 20, "stand"), (23, 18, "read_near"),
    (24, 18, "read_far"),
)


def default_script() -> ScenarioScript:
    """All 24 rooms in order, 600 s at nominal pace."""
    script = ScenarioScript(tuple(Segment(p, float(d), m) for p, d, m in _DEFAULT_SEGMENTS))
    assert script.duration_s == 600.0
    return script


# ------------------------------------------------------------------ noise


@dataclass(frozen=True)
class NoiseModel:
    pos_sigma_m: float = 0.01
    ori_sigma_rad: float = 0.005
    eye_offset_mean_m: float = 0.11
    eye_offset_sigma_m: float = 0.01
    grip_offset_mean_m: float = 0.05
    grip_offset_sigma_m: float = 0.01
    rtt_jitter_sigma_s: float = 0.005
    timing_jitter_sigma_s: float = 0.0005
    squat_ratio_sigma: float = 0.03
    rt_trial_sigma_s: float = 0.0
    gaze_miss_prob: float = 0.08
    ufo_miscount_prob: float = 0.10
    hardware_ipd_error: bool = True
    latency_samples_per_server: int = 10
    seed: int = 0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if name.endswith(("sigma_m", "sigma_rad", "sigma_s", "_sigma")) and v < 0:
                raise InvalidValue(f"{name} must be non-negative")
        for name in ("gaze_miss_prob", "ufo_miscount_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise InvalidValue(f"{name} must lie in [0, 1]")
        if self.latency_samples_per_server < 1:
            raise InvalidValue("need at least one latency sample per server")

    @classmethod
    def noiseless(cls, **overrides) -> "NoiseModel":
        base = dict(
            pos_sigma_m=0.0, ori_sigma_rad=0.0, eye_offset_sigma_m=0.0, grip_offset_sigma_m=0.0,
            rtt_jitter_sigma_s=0.0, timing_jitter_sigma_s=0.0, squat_ratio_sigma=0.0,
            rt_trial_sigma_s=0.0, gaze_miss_prob=0.0, ufo_miscount_prob=0.0,
            hardware_ipd_error=False, latency_samples_per_server=1,
        )
        base.update(overrides)
        return cls(**base)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: Mapping) -> "NoiseModel":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidValue(f"unknown noise fields {sorted(unknown)}")
        return cls(**obj)


# ------------------------------------------------------------------ population

_LAB_SITES = (
    ((37.8716, -122.2727), 0.52),
    ((42.3736, -71.1097), 0.40),
    ((47.6062, -122.3321), 0.04),
    ((30.2672, -97.7431), 0.04),
)
_POP_DEVICES = (("Vive Pro 2", 0.52), ("Oculus Quest 2", 0.42), ("HTC Vive", 0.06))
_HOST_RIGS = (((4.9, 120.0), 0.6), ((4.2, 60.0), 0.3), ((3.4, 22.0), 0.1))
_ETHNICITY = (("Asian", 0.60), ("White", 0.28), ("Black", 0.06), ("Hispanic", 0.06))
_LANGUAGE_GIVEN_ETHNICITY = {
    "Asian": {"zh": 0.62, "hi": 0.23, "fr": 0.15, "es": 0.12, "ar": 0.01},
    "White": {"fr": 0.55, "es": 0.45, "pt": 0.07, "zh": 0.05},
    "Black": {"fr": 0.40, "es": 0.30, "ar": 0.20},
    "Hispanic": {"es": 1.0, "pt": 0.30},
}
_MOCA_MISS = {
    "none": {"naming": 0.03, "serial7": 0.05, "recall": 0.25, "abstraction": 0.06,
             "repetition": 0.06, "orientation": 0.02},
    "mental": {"naming": 0.25, "serial7": 0.40, "recall": 0.60, "abstraction": 0.40,
               "repetition": 0.40, "orientation": 0.30},
}
_MOCA_ITEMS = {"naming": 3, "serial7": pz.SERIAL7_STEPS, "recall": 5, "abstraction": 2,
               "repetition": 2, "orientation": 4}

# session length grows with age; (years, minutes) knots
_AGE_KNOTS = (18.0, 23.0, 27.0, 64.0)
_MINUTE_KNOTS = (11.0, 14.5, 19.0, 29.0)
DURATION_SIGMA_MIN = 0.15


def _choice(rng, table):
    items, probs = zip(*table)
    return items[int(rng.choice(len(items), p=np.asarray(probs) / sum(probs)))]


def expected_duration_s(age_years: float) -> float:
    return float(np.interp(age_years, _AGE_KNOTS, _MINUTE_KNOTS)) * 60.0


def _sample_profile(rng: np.random.Generator, user_id: str, devices: Sequence[DeviceSpec]) -> UserProfile:
    lo, hi = _choice(rng, (((150, 165), 0.36), ((166, 175), 0.32), ((176, 189), 0.32)))
    height = int(rng.integers(lo, hi + 1)) / 100.0
    male = rng.random() < 1.0 / (1.0 + math.exp(-(height - 1.695) / 0.015))
    gender = "male" if male else "female"

    ratio = float(np.clip(rng.normal(1.035 if male else 1.0, 0.015), 0.92, 1.12))
    wingspan = round(height * ratio * 100) / 100.0
    side = _choice(rng, (("left", 0.52), ("right", 0.36), ("same", 0.12)))
    if side == "same":
        delta_cm = 0
    elif rng.random() < 12 / 88:
        delta_cm = int(rng.integers(3, 7))
    else:
        delta_cm = int(rng.integers(1, 3))
    sh = int(rng.integers(17, 22)) / 100.0
    arm_mean = (wingspan - 2 * sh) / 2.0
    signed = (delta_cm if side == "left" else -delta_cm) / 100.0
    arm_left, arm_right = arm_mean + signed / 2, arm_mean - signed / 2

    ipd_mm = float(np.clip(rng.normal(64.0 if male else 61.8, 2.2), 54.0, 74.0))
    ipd = int(round(ipd_mm * 10)) / 10000.0

    lo, hi = _choice(rng, (((18, 23), 0.48), ((24, 27), 0.40), ((28, 64), 0.12)))
    age = int(rng.integers(lo, hi + 1))
    minutes = np.interp(age, _AGE_KNOTS, _MINUTE_KNOTS) + rng.normal(0.0, DURATION_SIGMA_MIN)
    duration = round(float(minutes) * 60.0, 1)

    raw_rt = 0.245 * (1 + 0.004 * (age - 22)) * math.exp(rng.normal(0.0, 0.15))
    rt = int(np.clip(round(raw_rt * 60), 8, 36)) / 60.0

    disability = _choice(rng, (("none", 0.92), ("mental", 0.06), ("physical", 0.02)))
    if disability == "physical":
        fitness = "low"
    else:
        fitness = _choice(rng, (("low", 0.143), ("moderate", 0.653), ("high", 0.204)))

    ethnicity = _choice(rng, _ETHNICITY)
    languages = frozenset(
        code for code, p in sorted(_LANGUAGE_GIVEN_ETHNICITY[ethnicity].items()) if rng.random() < p
    )

    miss = _MOCA_MISS["mental" if disability == "mental" else "none"]
    answers = {k: int(n - rng.binomial(n, miss[k])) for k, n in _MOCA_ITEMS.items()}
    answers["memory"] = 1

    area_lo, area_hi = _choice(rng, (((3.5, 5.0), 0.08), ((5.0, 7.0), 0.48), ((7.0, 8.0), 0.04), ((8.0, 12.0), 0.40)))
    area = rng.uniform(area_lo, area_hi)
    aspect = rng.uniform(1.0, 1.6)
    length = round(math.sqrt(area * aspect) * 100) / 100.0
    width = round(area / length * 100) / 100.0

    model = _choice(rng, _POP_DEVICES)
    (cpu, gpu) = _choice(rng, _HOST_RIGS)

    return UserProfile(
        user_id=user_id,
        height_m=height,
        wingspan_m=wingspan,
        arm_left_m=arm_left,
        arm_right_m=arm_right,
        handedness="right" if rng.random() < 0.94 else "left",
        ipd_m=ipd,
        fitness=fitness,
        reaction_time_s=rt,
        room_length_m=length,
        room_width_m=width,
        location=_choice(rng, _LAB_SITES),
        device=device_by_model(model, devices),
        languages=languages,
        colorblind=bool(rng.random() < 0.04),
        hyperopia=_choice(rng, (("none", 0.56), ("severe", 0.26), ("mild", 0.18))),
        myopia=_choice(rng, (("severe", 0.64), ("none", 0.28), ("mild", 0.08))),
        moca_answers=answers,
        gender=gender,
        age_years=age,
        ethnicity=ethnicity,
        disability=disability,
        session_duration_s=duration,
        host_cpu_ghz=cpu,
        host_gpu_mhs=gpu,
    )


def sample_population(n: int, seed: int = 0, devices: Sequence[DeviceSpec] | None = None) -> list[UserProfile]:
    """``n`` participants; profile ``i`` depends only on (seed, i)."""
    if n < 1:
        raise InvalidValue("population size must be at least 1")
    devices = devices or load_devices()
    out = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        out.append(_sample_profile(rng, f"u{i:04d}", devices))
    return out


# ------------------------------------------------------------------ latency


def simulate_latency(
    location: tuple[float, float],
    servers: Sequence[ServerSite],
    jitter_sigma_s: float,
    seed: int = 0,
    model: PropagationModel = PropagationModel(),
    samples_per_server: int = 1,
) -> list[LatencySample]:
    if not servers:
        raise InvalidValue("need at least one server")
    if jitter_sigma_s < 0:
        raise InvalidValue("jitter sigma must be non-negative")
    rng = np.random.default_rng(seed)
    out = []
    for k in range(samples_per_server):
        for s in servers:
            d = float(great_circle_m(location[0], location[1], s.lat_deg, s.lon_deg))
            rtt = 2.0 * d / model.v_eff + model.proc_offset_s
            if jitter_sigma_s > 0:
                rtt += rng.normal(0.0, jitter_sigma_s)
            out.append(LatencySample(s.server_id, max(0.0, rtt), t=0.5 * k))
    return out


# ------------------------------------------------------------------ motion


def _smooth(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


@dataclass
class _Body:
    stand_y: float
    shoulder_y: float
    sh: float
    reach_left: float
    reach_right: float
    height: float
    squat_depth: float
    room: tuple[float, float]

    def rest(self):
        # (lateral, y, forward) per hand in the body frame
        return (self.sh + 0.05, 0.45 * self.height, 0.10), (self.sh + 0.05, 0.45 * self.height, 0.10)


@dataclass
class _Motion:
    head: np.ndarray
    yaw: np.ndarray
    pitch: np.ndarray
    left: np.ndarray  # body-frame (lateral, y, forward); lateral positive = outward
    right: np.ndarray


def _static(n, body: _Body, yaw=0.0, head_y=None):
    head = np.zeros((n, 3))
    head[:, 1] = body.stand_y if head_y is None else head_y
    rl, rr = body.rest()
    return _Motion(head, np.full(n, float(yaw)), np.zeros(n), np.tile(rl, (n, 1)), np.tile(rr, (n, 1)))


def _keyframes(u, keys, blend=0.15):
    """Phase p of len(keys)-1 equal phases ramps from keys[p] to keys[p+1], then holds."""
    k = len(keys) - 1
    keys = np.asarray(keys, float)
    phase = np.minimum((u * k).astype(int), k - 1)
    local = u * k - phase
    w = _smooth(local / blend)[:, None]
    return keys[phase] + w * (keys[phase + 1] - keys[phase])


def _motion(prim: str, u: np.ndarray, ctx: dict, body: _Body) -> _Motion:
    n = u.size
    m = _static(n, body)
    if prim in ("stand", "idle", "read_far"):
        return m
    if prim == "read_near":
        m.head[:, 1] = body.stand_y - 0.12
        m.pitch[:] = -0.4
        return m
    if prim == "turn":
        m.yaw = 2 * np.pi * _smooth(u)
        return m
    if prim == "explore_room":
        a = body.room[0] / 2 - 0.25
        b = body.room[1] / 2 - 0.25
        pts = np.array([[0, 0], [a, b], [-a, b], [-a, -b], [a, -b], [0, 0]], float)
        # 5 walking legs share 20% of the time, 4 corner dwells share 80%
        walk, dwell = 0.2 / 5, 0.8 / 4
        edges = np.cumsum([0] + [walk, dwell] * 4 + [walk])
        xz = np.empty((n, 2))
        for i in range(9):
            sel = (u >= edges[i]) & ((u < edges[i + 1]) | (i == 8))
            if i % 2 == 0:
                s = _smooth((u[sel] - edges[i]) / walk)[:, None]
                p0, p1 = pts[i // 2], pts[i // 2 + 1]
                xz[sel] = p0 + s * (p1 - p0)
            else:
                xz[sel] = pts[i // 2 + 1]
        m.head[:, 0], m.head[:, 2] = xz[:, 0], xz[:, 1]
        return m
    if prim == "t_pose":
        up = (body.sh, body.shoulder_y + 0.55, 0.05)
        hips = (body.sh + 0.12, body.shoulder_y - 0.45, 0.0)
        rl, _ = body.rest()
        for side, reach in (("left", body.reach_left), ("right", body.reach_right)):
            # four poses on the wall: arms up, T, hands on hips, arms forward
            keys = [rl, up, (reach, body.shoulder_y, 0.0), hips, (body.sh, body.shoulder_y, reach - body.sh)]
            setattr(m, side, _keyframes(u, keys))
        return m
    if prim == "squat_x3":
        shape = np.zeros(n)
        v = (u - 0.3) / 0.7 * 3
        active = v >= 0
        c = np.minimum(v[active].astype(int), 2)
        f = v[active] - c
        s = np.where(f < 0.3, _smooth(f / 0.3),
             np.where(f < 0.45, 1.0,
             np.where(f < 0.75, 1.0 - _smooth((f - 0.45) / 0.3), 0.0)))
        shape[active] = s
        m.head[:, 1] = body.stand_y - body.squat_depth * shape
        arm = np.column_stack([np.full(n, body.sh), m.head[:, 1] - SHOULDER_DROP_M, np.full(n, 0.45)])
        m.left, m.right = arm, arm.copy()
        return m
    if prim == "button_press":
        for t_peak, hand in ctx.get("presses", ()):
            s = (ctx["t"] - t_peak) / PRESS_DURATION_S
            w = np.where(np.abs(s) < 0.5, 0.5 * (1 + np.cos(2 * np.pi * s)), 0.0)[:, None]
            rest = getattr(m, hand)
            target = np.array([0.10, 0.90, 0.45])
            setattr(m, hand, rest + w * (target - rest))
        return m
    if prim == "gaze_panel":
        target = ctx["gaze_yaw"]
        pitch = math.atan2(1.6 - body.stand_y, 2.5)
        sweep = _smooth(u / 0.6)
        m.yaw = (target + 2 * np.pi) * sweep
        m.yaw = np.where(u >= 0.6, target, m.yaw)
        m.pitch = pitch * sweep
        return m
    raise InvalidValue(f"unknown motion primitive {prim!r}")


def _to_world(m: _Motion, rel: np.ndarray, sign: float) -> np.ndarray:
    fwd = np.column_stack([-np.sin(m.yaw), np.zeros_like(m.yaw), -np.cos(m.yaw)])
    right = np.column_stack([np.cos(m.yaw), np.zeros_like(m.yaw), -np.sin(m.yaw)])
    out = m.head.copy()
    out[:, 0] += sign * rel[:, 0] * right[:, 0] + rel[:, 2] * fwd[:, 0]
    out[:, 2] += sign * rel[:, 0] * right[:, 2] + rel[:, 2] * fwd[:, 2]
    out[:, 1] = rel[:, 1]
    return out


# ------------------------------------------------------------------ session


def _user_rng(noise: NoiseModel, user_id: str):
    return np.random.default_rng([noise.seed, zlib.crc32(user_id.encode())])


def _weekday_answers(date: str):
    d = _dt.date.fromisoformat(date)
    return [str(d.year), d.strftime("%B").lower(), str(d.day), d.strftime("%A").lower()]


_WRONG = {
    "naming": ("horse", "dog", "cow"),
    "recall": ("table", "green", "chair", "rose", "blue"),
    "abstraction": ("things", "objects"),
}


def _spoken(puzzle_id: int, profile: UserProfile, urng, date: str) -> str:
    a = profile.moca_answers

    def misses(n_items, n_correct):
        wrong = set(urng.choice(n_items, size=n_items - n_correct, replace=False).tolist())
        return [i in wrong for i in range(n_items)]

    if puzzle_id == pz.COLORBLIND_PUZZLE:
        return pz.COLORBLIND_WORD if profile.colorblind else pz.COLORSIGHTED_WORD
    if puzzle_id == pz.NAMING_PUZZLE:
        m = misses(3, a["naming"])
        words = [_WRONG["naming"][i] if m[i] else w for i, w in enumerate(pz.NAMING_ANSWERS)]
    elif puzzle_id == pz.SERIAL7_PUZZLE:
        m = misses(pz.SERIAL7_STEPS, a["serial7"])
        words, prev = [], pz.SERIAL7_START
        for wrong in m:
            prev = prev - 6 if wrong else prev - 7
            words.append(str(prev))
    elif puzzle_id == pz.RECALL_PUZZLE:
        m = misses(5, a["recall"])
        seen = list(pz.RECALL_WORDS)
        if profile.colorblind:
            seen[3] = pz.COLORBLIND_WORD
        words = [_WRONG["recall"][i] if m[i] else w for i, w in enumerate(seen)]
    elif puzzle_id == pz.ABSTRACTION_PUZZLE:
        m = misses(2, a["abstraction"])
        words = [_WRONG["abstraction"][i] if m[i] else w
                 for i, w in enumerate(("transportation", "measurement"))]
    elif puzzle_id == pz.REPETITION_PUZZLE:
        m = misses(2, a["repetition"])
        # a failed repetition drops a word
        words = [" ".join(s.split()[:-1]) if m[i] else s for i, s in enumerate(pz.REPETITION_SENTENCES)]
    elif puzzle_id == pz.ORIENTATION_PUZZLE:
        m = misses(4, a["orientation"])
        truth = _weekday_answers(date)
        d = _dt.date.fromisoformat(date)
        decoy = [str(d.year - 1), _dt.date(2000, d.month % 12 + 1, 1).strftime("%B").lower(),
                 str(d.day % 28 + 1), (d + _dt.timedelta(days=1)).strftime("%A").lower()]
        words = [decoy[i] if m[i] else w for i, w in enumerate(truth)]
    else:
        return pz.PASSWORDS[puzzle_id]
    return " | ".join(words)


def _layout_yaws():
    from .behavior import load_layout
    layout = load_layout()
    return {code: math.atan2(-p.center[0], -p.center[2]) for code, p in layout.panels.items()}


def simulate_session(
    profile: UserProfile,
    script: ScenarioScript | None = None,
    noise: NoiseModel | None = None,
    seed: int = 0,
    tier: Tier | str = Tier.PRIVILEGED_II,
    servers: Sequence[ServerSite] | None = None,
    model: PropagationModel = PropagationModel(),
    stretch_to_profile: bool = True,
    session_date: str = DEFAULT_SESSION_DATE,
) -> SessionBundle:
    """Render one play-through of ``script`` by ``profile``.

    The script is stretched to the profile's session duration unless
    ``stretch_to_profile`` is False. The bundle is produced at full fidelity
    and then masked down to what ``tier`` can observe.
    """
    script = default_script() if script is None else script
    noise = NoiseModel() if noise is None else noise
    if not script.segments:
        raise EmptyScript("script has no segments")
    if stretch_to_profile:
        script = script.scaled(profile.session_duration_s / script.duration_s)
    servers = load_servers() if servers is None else servers

    urng = _user_rng(noise, profile.user_id)
    srng = np.random.default_rng([seed, zlib.crc32(profile.user_id.encode()), 1])

    # per-user traits: stable across sessions
    eye = urng.normal(noise.eye_offset_mean_m, noise.eye_offset_sigma_m) if noise.eye_offset_sigma_m else noise.eye_offset_mean_m
    grip = urng.normal(noise.grip_offset_mean_m, noise.grip_offset_sigma_m) if noise.grip_offset_sigma_m else noise.grip_offset_mean_m
    ratio = SQUAT_RATIO[profile.fitness]
    if noise.squat_ratio_sigma:
        ratio = float(np.clip(ratio + urng.normal(0.0, noise.squat_ratio_sigma), 0.02, 0.7))
    close_ok = urng.random() >= CLOSE_FAIL[profile.hyperopia]
    far_ok = urng.random() >= FAR_FAIL[profile.myopia]
    langs = sorted(profile.languages)
    preferred = langs[int(urng.integers(len(langs)))] if langs else None
    spoken = {p: _spoken(p, profile, urng, session_date) for p in pz.PASSWORD_PUZZLES}

    stand_y = profile.height_m - eye
    body = _Body(
        stand_y=stand_y,
        shoulder_y=stand_y - SHOULDER_DROP_M,
        sh=profile.shoulder_half_width_m,
        reach_left=profile.shoulder_half_width_m + profile.arm_left_m - grip,
        reach_right=profile.shoulder_half_width_m + profile.arm_right_m - grip,
        height=profile.height_m,
        squat_depth=ratio * profile.height_m,
        room=(profile.room_length_m, profile.room_width_m),
    )

    # clock
    rate = profile.device.tracking_rate_hz
    total = script.duration_s
    n = int(round(total * rate)) + 1
    t = np.arange(n) / rate
    if noise.timing_jitter_sigma_s:
        lim = 0.4 / rate
        t = t + np.clip(srng.normal(0.0, noise.timing_jitter_sigma_s, n), -lim, lim)
        t[0] = 0.0

    starts = np.cumsum([0.0] + [s.duration_s for s in script.segments[:-1]])
    seg_of = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(script.segments) - 1)

    dominant = profile.handedness
    other = "left" if dominant == "right" else "right"
    events: list[EventRecord] = []
    head = np.zeros((n, 3))
    yaw = np.zeros(n)
    pitch = np.zeros(n)
    left = np.zeros((n, 3))
    right = np.zeros((n, 3))
    yaws = _layout_yaws()
    entered: set[int] = set()
    last_seg = {s.puzzle_id: i for i, s in enumerate(script.segments)}

    for i, seg in enumerate(script.segments):
        t0, dur = float(starts[i]), seg.duration_s
        idx = np.flatnonzero(seg_of == i)
        ctx: dict = {"t": t[idx]}
        pid = seg.puzzle_id
        if pid not in entered:
            entered.add(pid)
            payload = {"date": session_date} if pid == pz.ORIENTATION_PUZZLE else {}
            events.append(EventRecord(round(t0, 6), EventKind.PUZZLE_ENTER, pid, payload))

        if seg.primitive == "button_press":
            presses = []
            if pid == pz.REACTION_PUZZLE:
                for u in (0.15, 0.30, 0.45, 0.60, 0.75):
                    ts = round(t0 + u * dur, 6)
                    rt = profile.reaction_time_s
                    if noise.rt_trial_sigma_s:
                        rt = max(0.1, rt + srng.normal(0.0, noise.rt_trial_sigma_s))
                    hand = dominant if srng.random() < DOMINANT_PRESS_PROB else other
                    events.append(EventRecord(ts, EventKind.STIMULUS_SHOWN, pid, {}))
                    events.append(EventRecord(ts + rt, EventKind.BUTTON_PRESS, pid, {"hand": hand}))
                    presses.append((ts + rt, hand))
            else:
                for u in (0.20, 0.35, 0.50):
                    tp = round(t0 + u * dur, 6)
                    hand = dominant if srng.random() < DOMINANT_PRESS_PROB else other
                    events.append(EventRecord(tp, EventKind.BUTTON_PRESS, pid, {"hand": hand}))
                    presses.append((tp, hand))
            ctx["presses"] = presses
        if seg.primitive == "gaze_panel":
            looked = preferred if preferred and srng.random() >= noise.gaze_miss_prob else None
            # nobody recognized: the player reads the room without settling on a panel
            ctx["gaze_yaw"] = yaws[looked] if looked else yaws[LANGUAGE_CODES[0]] + math.pi / 8

        u = (t[idx] - t0) / dur
        m = _motion(seg.primitive, u, ctx, body)
        head[idx], yaw[idx], pitch[idx] = m.head, m.yaw, m.pitch
        left[idx] = _to_world(m, m.left, -1.0)
        right[idx] = _to_world(m, m.right, 1.0)

        if i == last_seg[pid]:
            if pid in pz.PASSWORD_PUZZLES:
                frac = 0.8 if seg.primitive == "gaze_panel" else 0.9
                events.append(EventRecord(round(t0 + frac * dur, 6), EventKind.SPOKEN_PASSWORD, pid,
                                          {"text": spoken[pid]}))
            if pid == pz.UFO_PUZZLE:
                k = sum(r <= profile.device.hmd_refresh_hz for r in pz.UFO_RATES_HZ)
                if srng.random() < noise.ufo_miscount_prob:
                    k = int(np.clip(k + (1 if srng.random() < 0.5 else -1), 1, len(pz.UFO_RATES_HZ)))
                events.append(EventRecord(round(t0 + 0.9 * dur, 6), EventKind.UFO_ANSWER, pid, {"distinct_count": k}))
            if pid in (pz.CLOSE_READ_PUZZLE, pz.FAR_READ_PUZZLE):
                close = pid == pz.CLOSE_READ_PUZZLE
                events.append(EventRecord(
                    round(t0 + 0.9 * dur, 6), EventKind.READ_ATTEMPT, pid,
                    {"success": bool(close_ok if close else far_ok),
                     "range_m": pz.CLOSE_READ_RANGE_M if close else pz.FAR_READ_RANGE_M},
                ))

    pos = np.stack([head, left, right], axis=1)
    if noise.pos_sigma_m:
        pos = pos + srng.normal(0.0, noise.pos_sigma_m, pos.shape)
    yaw3 = np.stack([yaw, yaw, yaw], axis=1)
    pitch3 = np.stack([pitch, np.zeros(n), np.zeros(n)], axis=1)
    if noise.ori_sigma_rad:
        yaw3 = yaw3 + srng.normal(0.0, noise.ori_sigma_rad, yaw3.shape)
        pitch3 = pitch3 + srng.normal(0.0, noise.ori_sigma_rad, pitch3.shape)
    yaw3 = np.mod(yaw3 + np.pi, 2 * np.pi) - np.pi
    quat = quat_from_yaw_pitch(yaw3, pitch3)
    trace = TelemetryTrace(t, pos, quat, float(rate))

    device_api = _device_api(profile, noise, srng)
    latency = simulate_latency(
        profile.location, servers, noise.rtt_jitter_sigma_s,
        seed=int(srng.integers(2**63)), model=model,
        samples_per_server=noise.latency_samples_per_server,
    )
    bundle = SessionBundle(trace, tuple(events), device_api, tuple(latency), Tier.PRIVILEGED_II)
    return mask_for_tier(bundle, tier) if Tier(tier) is not Tier.PRIVILEGED_II else bundle


def _device_api(profile: UserProfile, noise: NoiseModel, rng) -> DeviceApiSample:
    dev = profile.device
    ipd = profile.ipd_m
    if noise.hardware_ipd_error:
        if dev.ipd_steps_m:
            steps = np.asarray(dev.ipd_steps_m)
            ipd = float(steps[np.argmin(np.abs(steps - ipd))])
        elif dev.ipd_readout_sigma_m:
            # the lens setting persists between sessions, so its error is per user
            knob = np.random.default_rng([noise.seed, zlib.crc32(profile.user_id.encode()), 2])
            ipd = ipd + knob.normal(0.0, dev.ipd_readout_sigma_m)
        ipd = float(np.clip(ipd, 0.050, 0.080))
    k = np.arange(int(round(RENDER_WINDOW_S * dev.hmd_refresh_hz)) + 1)
    ts = 1.0 + k / dev.hmd_refresh_hz
    cpu, gpu = profile.host_cpu_ghz, profile.host_gpu_mhs
    if noise.timing_jitter_sigma_s:
        lim = 0.4 / dev.hmd_refresh_hz
        ts = ts + np.clip(rng.normal(0.0, noise.timing_jitter_sigma_s, ts.size), -lim, lim)
        cpu = round(cpu + rng.normal(0.0, 0.05), 2)
        gpu = round(max(0.0, gpu + rng.normal(0.0, 3.0)), 1)
    return DeviceApiSample(ipd, tuple(ts.tolist()), dev.resolution_mp, dev.fov_deg, cpu, gpu)
