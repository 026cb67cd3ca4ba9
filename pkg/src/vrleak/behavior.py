"""Behavioral attributes scored from the puzzle event log: MoCA, color vision,
spoken languages and eyesight."""

from __future__ import annotations

import datetime as _dt
import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import puzzles as pz
from .errors import (
    InvalidValue,
    MissingPuzzleEvents,
    MissingReadAttempt,
    NoGazeHit,
    UnrecognizedPassword,
)
from .telemetry import FORWARD_AXIS, HMD, EventKind, EventRecord, TelemetryTrace, quat_rotate

MOCA_PASS_ABOVE = 26

# categories the escape room never administers, credited in full
VISUOSPATIAL_CREDIT = 5
ATTENTION_CREDIT = 3  # digit span (2) + letter tapping (1)
FLUENCY_CREDIT = 1
PLACE_CREDIT = 2  # orientation: place and city


# ------------------------------------------------------------------ layout


@dataclass(frozen=True)
class Panel:
    center: tuple[float, float, float]
    width: float
    height: float
    normal: tuple[float, float, float]

    def __post_init__(self):
        n = np.asarray(self.normal, float)
        if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-6:
            raise InvalidValue("panel normal must be a unit 3-vector")
        if self.width <= 0 or self.height <= 0:
            raise InvalidValue("panel size must be positive")


@dataclass(frozen=True)
class PanelLayout:
    panels: Mapping[str, Panel]
    puzzle_id: int = pz.LANGUAGE_PUZZLE

    def __post_init__(self):
        items = list(self.panels.items())
        for i, (a, pa) in enumerate(items):
            for b, pb in items[i + 1:]:
                gap = np.linalg.norm(np.subtract(pa.center, pb.center))
                if gap < (max(pa.width, pa.height) + max(pb.width, pb.height)) / 2:
                    raise InvalidValue(f"panels {a} and {b} overlap")

    def translated(self, offset) -> "PanelLayout":
        off = np.asarray(offset, float)
        return PanelLayout(
            {k: Panel(tuple((np.asarray(p.center) + off).tolist()), p.width, p.height, p.normal)
             for k, p in self.panels.items()},
            self.puzzle_id,
        )

    def to_json(self) -> dict:
        return {
            "puzzle_id": self.puzzle_id,
            "panels": {k: {"center": list(p.center), "width": p.width, "height": p.height,
                           "normal": list(p.normal)} for k, p in self.panels.items()},
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PanelLayout":
        panels = {
            k: Panel(tuple(map(float, v["center"])), float(v["width"]), float(v["height"]),
                     tuple(map(float, v["normal"])))
            for k, v in obj["panels"].items()
        }
        return cls(panels, int(obj.get("puzzle_id", pz.LANGUAGE_PUZZLE)))


def load_layout(path=None) -> PanelLayout:
    if path is None:
        text = resources.files("vrleak").joinpath("data/layout.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return PanelLayout.from_json(json.loads(text))


def ray_hit(origin, direction, layout: PanelLayout) -> str | None:
    """Language code of the nearest panel hit by the ray, or None."""
    o = np.asarray(origin, float)
    d = np.asarray(direction, float)
    best, best_s = None, np.inf
    for code, p in layout.panels.items():
        n = np.asarray(p.normal)
        denom = float(n @ d)
        if abs(denom) < 1e-9:
            continue
        s = float(n @ (np.asarray(p.center) - o)) / denom
        if s <= 0 or s >= best_s:
            continue
        rel = o + s * d - np.asarray(p.center)
        horiz = np.cross((0.0, 1.0, 0.0), n)
        if np.linalg.norm(horiz) < 1e-9:
            horiz = np.array([1.0, 0.0, 0.0])
        horiz /= np.linalg.norm(horiz)
        vert = np.cross(n, horiz)
        if abs(rel @ horiz) <= p.width / 2 and abs(rel @ vert) <= p.height / 2:
            best, best_s = code, s
    return best


# ------------------------------------------------------------------ helpers


def _items(text: str) -> list[str]:
    out = []
    for part in text.split(pz.ITEM_SEPARATOR):
        words = re.sub(r"[^a-z0-9 ]+", " ", part.lower()).split()
        if words:
            out.append(" ".join(words))
    return out


def _passwords(events: Iterable[EventRecord], puzzle_id: int) -> list[str]:
    return [
        str(e.payload.get("text", ""))
        for e in events
        if e.kind is EventKind.SPOKEN_PASSWORD and e.puzzle_id == puzzle_id
    ]


# ------------------------------------------------------------------ MoCA


def serial7_points(correct: int) -> int:
    if correct >= 4:
        return 3
    if correct >= 2:
        return 2
    return 1 if correct == 1 else 0


@dataclass(frozen=True)
class MocaScore:
    naming: int
    memory: bool  # administered, never scored
    serial7: int
    attention: int
    repetition: int
    abstraction: int
    recall: int
    orientation: int
    language: int
    visuospatial: int = VISUOSPATIAL_CREDIT

    @property
    def total(self) -> int:
        return (self.visuospatial + self.naming + self.attention + self.serial7 + self.repetition
                + self.language + self.abstraction + self.recall + self.orientation)

    @property
    def passed(self) -> bool:
        return self.total > MOCA_PASS_ABOVE


def moca_total_from_answers(answers: Mapping[str, int]) -> int:
    """Total implied by per-category correct counts (the simulator's ground truth)."""
    return (VISUOSPATIAL_CREDIT + ATTENTION_CREDIT + FLUENCY_CREDIT + PLACE_CREDIT
            + answers["naming"] + serial7_points(answers["serial7"]) + answers["repetition"]
            + answers["abstraction"] + answers["recall"] + answers["orientation"])


def _score_naming(text):
    return len(set(_items(text)) & set(pz.NAMING_ANSWERS))


def _score_serial7(text):
    prev, correct = pz.SERIAL7_START, 0
    for item in _items(text)[: pz.SERIAL7_STEPS]:
        if not item.isdigit():
            continue
        value = int(item)
        correct += prev - value == 7
        prev = value
    return serial7_points(correct)


def _score_recall(text):
    said = set(_items(text))
    return sum(1 for w in pz.RECALL_WORDS if said & set(pz.RECALL_ALIASES.get(w, (w,))))


def _score_abstraction(text):
    words = {w for item in _items(text) for w in item.split()}
    return sum(1 for group in pz.ABSTRACTION_KEYWORDS if words & set(group))


def _score_repetition(text):
    said = set(_items(text))
    return sum(1 for s in pz.REPETITION_SENTENCES if s in said)


def _date_probes(date: _dt.date) -> list[set[str]]:
    return [
        {str(date.year)},
        {date.strftime("%B").lower(), str(date.month)},
        {str(date.day)},
        {date.strftime("%A").lower()},
    ]


def _score_orientation(text, date):
    said = set(_items(text))
    return PLACE_CREDIT + sum(1 for probe in _date_probes(date) if said & probe)


def _reference_date(events) -> _dt.date | None:
    for e in events:
        if e.kind is EventKind.PUZZLE_ENTER and e.puzzle_id == pz.ORIENTATION_PUZZLE and "date" in e.payload:
            return _dt.date.fromisoformat(str(e.payload["date"]))
    return None


def score_moca(events: Sequence[EventRecord]) -> MocaScore:
    """Score the MoCA rooms. Several answers in one room: the best one counts."""
    events = list(events)
    spoken = {p: _passwords(events, p) for p in pz.MOCA_PUZZLES}
    missing = [p for p, texts in spoken.items() if not texts]
    date = _reference_date(events)
    if date is None and pz.ORIENTATION_PUZZLE not in missing:
        missing.append(pz.ORIENTATION_PUZZLE)
    if missing:
        raise MissingPuzzleEvents(missing)

    def best(p, fn, *args):
        return max(fn(t, *args) for t in spoken[p])

    return MocaScore(
        naming=best(pz.NAMING_PUZZLE, _score_naming),
        memory=True,
        serial7=best(pz.SERIAL7_PUZZLE, _score_serial7),
        attention=ATTENTION_CREDIT,
        repetition=best(pz.REPETITION_PUZZLE, _score_repetition),
        abstraction=best(pz.ABSTRACTION_PUZZLE, _score_abstraction),
        recall=best(pz.RECALL_PUZZLE, _score_recall),
        orientation=best(pz.ORIENTATION_PUZZLE, _score_orientation, date),
        language=FLUENCY_CREDIT,
    )


# ------------------------------------------------------------------ others


def detect_colorblind(events: Sequence[EventRecord]) -> bool:
    texts = _passwords(events, pz.COLORBLIND_PUZZLE)
    if not texts:
        raise MissingPuzzleEvents([pz.COLORBLIND_PUZZLE])
    word = " ".join(_items(texts[-1]))
    if word == pz.COLORBLIND_WORD:
        return True
    if word == pz.COLORSIGHTED_WORD:
        return False
    raise UnrecognizedPassword(f"puzzle {pz.COLORBLIND_PUZZLE} answer {texts[-1]!r} is neither plate reading")


def gaze_ray(trace: TelemetryTrace, t: float):
    """HMD origin and forward direction at the frame nearest ``t``."""
    i = int(np.clip(np.searchsorted(trace.t, t), 0, len(trace) - 1))
    if i > 0 and abs(trace.t[i - 1] - t) <= abs(trace.t[i] - t):
        i -= 1
    return trace.pos[i, HMD], quat_rotate(trace.quat[i, HMD], FORWARD_AXIS)


def detect_languages(trace: TelemetryTrace, events: Sequence[EventRecord], layout: PanelLayout) -> set[str]:
    """Languages whose panel the player faced while saying the room's password."""
    times = [e.t for e in events
             if e.kind is EventKind.SPOKEN_PASSWORD and e.puzzle_id == layout.puzzle_id]
    if not times:
        raise MissingPuzzleEvents([layout.puzzle_id])
    found = set()
    for t in times:
        code = ray_hit(*gaze_ray(trace, t), layout)
        if code is not None:
            found.add(code)
    if not found:
        raise NoGazeHit(f"gaze missed every panel at {len(times)} utterance(s)")
    return found


def assess_eyesight(events: Sequence[EventRecord]) -> tuple[bool, bool]:
    """(hyperopia, myopia): failing the close read flags far-sightedness and vice versa."""
    result = {}
    for e in events:
        if e.kind is EventKind.READ_ATTEMPT and e.puzzle_id in (pz.CLOSE_READ_PUZZLE, pz.FAR_READ_PUZZLE):
            result[e.puzzle_id] = bool(e.payload.get("success"))
    missing = [p for p in (pz.CLOSE_READ_PUZZLE, pz.FAR_READ_PUZZLE) if p not in result]
    if missing:
        raise MissingReadAttempt(f"no ReadAttempt for puzzle(s) {missing}")
    return not result[pz.CLOSE_READ_PUZZLE], not result[pz.FAR_READ_PUZZLE]
