"""The 24-room escape-room catalogue: passwords, MoCA answer keys, and the
per-room roles the attacks rely on."""

from __future__ import annotations

PASSWORDS = {
    1: "hello",
    2: "face",
    3: "velvet",
    4: "church",
    5: "daisy",  # colorblind players read "as"
    6: "red",
    7: "recluse",
    8: "cave",
    9: "motivation",
    10: "deafening",
    12: "finally",
    13: "apple",
    14: "i can",
    16: "lion | rhinoceros | camel",
    17: "93 | 86 | 79 | 72 | 65",
    18: "face | velvet | church | daisy | red",
    19: "transportation | measurement",
    20: "i only know that john is the one to help today | the cat always hid under the couch when dogs were in the room",
    21: "albert einstein",
    22: None,  # today's date, spoken as year | month | day-of-month | weekday
}

PASSWORD_PUZZLES = frozenset(PASSWORDS)

COLORBLIND_PUZZLE = 5
COLORBLIND_WORD = "as"
COLORSIGHTED_WORD = "daisy"

BUTTON_PUZZLE = 6
MEMORY_PUZZLE = 7
POSE_PUZZLE = 8
SQUAT_PUZZLE = 9
REACTION_PUZZLE = 11
LANGUAGE_PUZZLE = 13
UFO_PUZZLE = 15
CLOSE_READ_PUZZLE = 23
FAR_READ_PUZZLE = 24

# MoCA rooms
NAMING_PUZZLE = 16
SERIAL7_PUZZLE = 17
RECALL_PUZZLE = 18
ABSTRACTION_PUZZLE = 19
REPETITION_PUZZLE = 20
ORIENTATION_PUZZLE = 22
MOCA_PUZZLES = (MEMORY_PUZZLE, NAMING_PUZZLE, SERIAL7_PUZZLE, RECALL_PUZZLE,
                ABSTRACTION_PUZZLE, REPETITION_PUZZLE, ORIENTATION_PUZZLE)

ITEM_SEPARATOR = "|"

NAMING_ANSWERS = ("lion", "rhinoceros", "camel")
SERIAL7_START = 100
SERIAL7_STEPS = 5
RECALL_WORDS = ("face", "velvet", "church", "daisy", "red")
# puzzle 5's row holds whatever the player read there
RECALL_ALIASES = {"daisy": ("daisy", "as")}
ABSTRACTION_KEYWORDS = (
    ("transport", "transportation", "travel", "vehicle", "vehicles"),
    ("measure", "measurement", "measuring", "instrument", "instruments"),
)
REPETITION_SENTENCES = (
    "i only know that john is the one to help today",
    "the cat always hid under the couch when dogs were in the room",
)

# balloons in the refresh-rate room move at these rates (Hz)
UFO_RATES_HZ = (30, 60, 90, 120, 144)

CLOSE_READ_RANGE_M = 0.4
FAR_READ_RANGE_M = 5.0
