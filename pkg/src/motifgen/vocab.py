"""Token vocabulary for the 4-bar multitrack representation.

528 event tokens across 9 categories, plus 4 specials:

    special      pad=0  bos=1  sep=2  eos=3
    bar            1    new-bar marker
    tempo         32    geometric bin centers, 16..256 BPM
    instrument    17    16 General MIDI program families + drums (class 16)
    pitch        128    melodic MIDI pitch
    pitch_drum   128    percussion key (channel-10 note number)
    position      48    onset slot within a bar (1/48 bar grid)
    duration      58    grid-unit values from a graded table, 1..176
    velocity      32    uniform width-4 bins, centers 4*i + 2
    chord         84    12 roots x 7 qualities

Event ids are assigned densely after the specials, in the order above, so
every category occupies one contiguous id range and the category of an id
is recoverable by range check. The layout is fixed; serialization exists
for the wire format and for hashing checkpoints against the vocabulary
they were trained with.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterator

PAD, BOS, SEP, EOS = 0, 1, 2, 3
SPECIALS = {"pad": PAD, "bos": BOS, "sep": SEP, "eos": EOS}
N_SPECIALS = 4

CATEGORIES = (
    "bar",
    "tempo",
    "instrument",
    "pitch",
    "pitch_drum",
    "position",
    "duration",
    "velocity",
    "chord",
)

CATEGORY_SIZES = {
    "bar": 1,
    "tempo": 32,
    "instrument": 17,
    "pitch": 128,
    "pitch_drum": 128,
    "position": 48,
    "duration": 58,
    "velocity": 32,
    "chord": 84,
}

N_EVENTS = sum(CATEGORY_SIZES.values())  # 528
VOCAB_SIZE = N_SPECIALS + N_EVENTS  # 532

DRUM_CLASS = 16

TEMPO_MIN, TEMPO_MAX, N_TEMPO_BINS = 16.0, 256.0, 32
N_VELOCITY_BINS = 32

CHORD_QUALITIES = ("maj", "min", "dim", "aug", "dom7", "maj7", "min7")

QUALITY_PITCH_CLASSES = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "dom7": (0, 4, 7, 10),
    "maj7": (0, 4, 7, 11),
    "min7": (0, 3, 7, 10),
}

PITCH_CLASS_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")


def _tempo_centers() -> tuple[float, ...]:
    # 32 geometric steps from 16 to 256 BPM inclusive.
    ratio = TEMPO_MAX / TEMPO_MIN
    return tuple(TEMPO_MIN * ratio ** (i / (N_TEMPO_BINS - 1)) for i in range(N_TEMPO_BINS))


def _duration_values() -> tuple[int, ...]:
    """Graded duration table: unit steps to half a bar, then coarser.

    1..24 by 1, 26..48 by 2, 52..96 by 4, 104..176 by 8. 58 values total.
    """
    vals = list(range(1, 25))
    vals += list(range(26, 49, 2))
    vals += list(range(52, 97, 4))
    vals += list(range(104, 177, 8))
    return tuple(vals)


TEMPO_CENTERS = _tempo_centers()
DURATION_VALUES = _duration_values()
VELOCITY_CENTERS = tuple(4 * i + 2 for i in range(N_VELOCITY_BINS))

assert len(DURATION_VALUES) == CATEGORY_SIZES["duration"]


def _nearest(sorted_values, x: float, key=lambda v: v) -> int:
    """Index of the nearest value under key distance; ties go to the lower index."""
    best, best_d = 0, abs(key(x) - key(sorted_values[0]))
    for i in range(1, len(sorted_values)):
        d = abs(key(x) - key(sorted_values[i]))
        if d < best_d:
            best, best_d = i, d
    return best


@dataclass(frozen=True)
class ChordLabel:
    """A chord as root pitch class (0..11, C=0) and quality name."""

    root: int
    quality: str

    def __post_init__(self) -> None:
        if not 0 <= self.root < 12:
            raise ValueError(f"chord root out of range: {self.root}")
        if self.quality not in CHORD_QUALITIES:
            raise ValueError(f"unknown chord quality: {self.quality!r}")

    @property
    def index(self) -> int:
        return self.root * len(CHORD_QUALITIES) + CHORD_QUALITIES.index(self.quality)

    @classmethod
    def from_index(cls, idx: int) -> "ChordLabel":
        nq = len(CHORD_QUALITIES)
        if not 0 <= idx < 12 * nq:
            raise ValueError(f"chord index out of range: {idx}")
        return cls(idx // nq, CHORD_QUALITIES[idx % nq])

    def sort_key(self) -> tuple[int, int]:
        return (self.root, CHORD_QUALITIES.index(self.quality))

    def __str__(self) -> str:
        return f"{PITCH_CLASS_NAMES[self.root]}:{self.quality}"


class Vocabulary:
    """Fixed event vocabulary with dense contiguous ids per category."""

    def __init__(self) -> None:
        self.pad, self.bos, self.sep, self.eos = PAD, BOS, SEP, EOS
        self.size = VOCAB_SIZE
        self.n_events = N_EVENTS
        self._ranges: dict[str, tuple[int, int]] = {}
        start = N_SPECIALS
        for cat in CATEGORIES:
            n = CATEGORY_SIZES[cat]
            self._ranges[cat] = (start, start + n)
            start += n
        assert start == VOCAB_SIZE

    # -- id construction ------------------------------------------------

    def range(self, category: str) -> tuple[int, int]:
        """Half-open id range [start, end) of a category."""
        return self._ranges[category]

    def event_id(self, category: str, index: int) -> int:
        lo, hi = self._ranges[category]
        if not 0 <= index < hi - lo:
            raise ValueError(f"{category} index out of range: {index}")
        return lo + index

    @property
    def bar(self) -> int:
        return self._ranges["bar"][0]

    def tempo_id(self, bin_index: int) -> int:
        return self.event_id("tempo", bin_index)

    def instrument_id(self, instrument_class: int) -> int:
        return self.event_id("instrument", instrument_class)

    def pitch_id(self, pitch: int) -> int:
        return self.event_id("pitch", pitch)

    def pitch_drum_id(self, pitch: int) -> int:
        return self.event_id("pitch_drum", pitch)

    def position_id(self, position: int) -> int:
        return self.event_id("position", position)

    def duration_id(self, bin_index: int) -> int:
        return self.event_id("duration", bin_index)

    def velocity_id(self, bin_index: int) -> int:
        return self.event_id("velocity", bin_index)

    def chord_token(self, label: ChordLabel) -> int:
        return self.event_id("chord", label.index)

    # -- id interpretation ----------------------------------------------

    def category_of(self, token_id: int) -> str:
        if 0 <= token_id < N_SPECIALS:
            return "special"
        for cat in CATEGORIES:
            lo, hi = self._ranges[cat]
            if lo <= token_id < hi:
                return cat
        raise ValueError(f"token id out of range: {token_id}")

    def index_of(self, token_id: int) -> int:
        """Index of an event id within its category."""
        cat = self.category_of(token_id)
        if cat == "special":
            return token_id
        return token_id - self._ranges[cat][0]

    def chord_label(self, token_id: int) -> ChordLabel:
        return ChordLabel.from_index(self.index_of(token_id))

    # -- value quantization ----------------------------------------------

    def tempo_bin(self, bpm: float) -> int:
        """Nearest tempo bin in log space; ties to the lower bin."""
        if bpm <= 0:
            raise ValueError(f"BPM must be positive: {bpm}")
        return _nearest(TEMPO_CENTERS, bpm, key=math.log)

    def tempo_center(self, bin_index: int) -> float:
        return TEMPO_CENTERS[bin_index]

    def velocity_bin(self, velocity: float) -> int:
        """Width-4 interval membership: bin = floor(v / 4), clamped."""
        return max(0, min(N_VELOCITY_BINS - 1, int(velocity // 4)))

    def velocity_center(self, bin_index: int) -> int:
        return VELOCITY_CENTERS[bin_index]

    def duration_bin(self, units: float) -> int:
        """Nearest duration value; ties to the shorter one."""
        return _nearest(DURATION_VALUES, units)

    def duration_value(self, bin_index: int) -> int:
        return DURATION_VALUES[bin_index]

    def pitch_value(self, mean_pitch: float) -> int:
        """Round a real pitch to the nearest key, half away from zero, clamped."""
        return max(0, min(127, int(math.floor(mean_pitch + 0.5))))

    # -- serialization ----------------------------------------------------

    def events(self) -> Iterator[tuple[int, str, str]]:
        """Yield (id, category, value string) for each of the 528 events."""
        for cat in CATEGORIES:
            lo, hi = self._ranges[cat]
            for tid in range(lo, hi):
                idx = tid - lo
                if cat == "bar":
                    value = "bar"
                elif cat == "tempo":
                    value = f"{TEMPO_CENTERS[idx]:.6f}"
                elif cat == "duration":
                    value = str(DURATION_VALUES[idx])
                elif cat == "velocity":
                    value = str(VELOCITY_CENTERS[idx])
                elif cat == "chord":
                    lab = ChordLabel.from_index(idx)
                    value = f"{lab.root}:{lab.quality}"
                else:
                    value = str(idx)
                yield tid, cat, value

    def to_json_dict(self) -> dict:
        return {
            "events": [
                {"id": tid, "category": cat, "value": value}
                for tid, cat, value in self.events()
            ],
            "special": dict(SPECIALS),
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    def hash_hex(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("ascii")).hexdigest()

    @classmethod
    def from_json_dict(cls, data: dict) -> "Vocabulary":
        vocab = cls()
        got = data.get("special")
        if got != dict(SPECIALS):
            raise ValueError(f"special token table mismatch: {got}")
        events = data.get("events")
        expected = list(vocab.events())
        if events is None or len(events) != len(expected):
            n = None if events is None else len(events)
            raise ValueError(f"expected {len(expected)} events, got {n}")
        for entry, (tid, cat, value) in zip(events, expected):
            if (entry.get("id"), entry.get("category"), entry.get("value")) != (tid, cat, value):
                raise ValueError(f"event table mismatch at id {tid}: {entry}")
        return vocab


VOCAB = Vocabulary()
