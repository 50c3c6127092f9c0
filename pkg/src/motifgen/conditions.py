"""Musical metadata: extraction, the condition prefix, and random drops.

Six optional condition categories describe a window: the instrument set,
the chord set, and mean tempo / pitch / velocity / duration. A prefix
encodes whichever are present using ordinary event tokens, in the fixed
order instruments, chords, tempo, pitch, velocity, duration, terminated by
the sep token; absent categories simply contribute nothing, so an empty
ConditionSet encodes to [sep] alone.

Training drops whole categories independently with a fixed probability so
one model serves every subset of conditions at inference time.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Optional

from .midi_io import DRUM_CLASS, TOTAL_UNITS, NoteSong
from .tokenizer import half_bar_chords
from .vocab import VOCAB, ChordLabel, Vocabulary

CATEGORY_ORDER = (
    "instruments",
    "chords",
    "mean_tempo",
    "mean_pitch",
    "mean_velocity",
    "mean_duration",
)


class EmptySong(ValueError):
    """Metadata extraction needs at least one note."""


@dataclass(frozen=True)
class ConditionSet:
    """Any subset of the six condition categories; None means absent."""

    instruments: Optional[frozenset[int]] = None
    chords: Optional[frozenset[ChordLabel]] = None
    mean_tempo: Optional[float] = None
    mean_pitch: Optional[float] = None
    mean_velocity: Optional[float] = None
    mean_duration: Optional[float] = None

    def __post_init__(self) -> None:
        if self.instruments is not None:
            if not self.instruments:
                raise ValueError("instruments: must be non-empty when present")
            for c in self.instruments:
                if not 0 <= c <= DRUM_CLASS:
                    raise ValueError(f"instruments: class out of range: {c}")
        if self.chords is not None and not self.chords:
            raise ValueError("chords: must be non-empty when present")
        if self.mean_tempo is not None and not self.mean_tempo > 0:
            raise ValueError(f"mean_tempo: must be positive: {self.mean_tempo}")
        if self.mean_pitch is not None and not 0 <= self.mean_pitch <= 127:
            raise ValueError(f"mean_pitch: out of range: {self.mean_pitch}")
        if self.mean_velocity is not None and not 1 <= self.mean_velocity <= 127:
            raise ValueError(f"mean_velocity: out of range: {self.mean_velocity}")
        if self.mean_duration is not None and not 1 <= self.mean_duration <= TOTAL_UNITS:
            raise ValueError(f"mean_duration: out of range: {self.mean_duration}")

    def present_categories(self) -> tuple[str, ...]:
        return tuple(name for name in CATEGORY_ORDER if getattr(self, name) is not None)

    def is_empty(self) -> bool:
        return not self.present_categories()

    def to_json_dict(self) -> dict:
        out: dict = {}
        if self.instruments is not None:
            out["instruments"] = sorted(self.instruments)
        if self.chords is not None:
            out["chords"] = [
                {"root": c.root, "quality": c.quality}
                for c in sorted(self.chords, key=ChordLabel.sort_key)
            ]
        for name in ("mean_tempo", "mean_pitch", "mean_velocity", "mean_duration"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "ConditionSet":
        if not isinstance(data, dict):
            raise ValueError("conditions: expected an object")
        unknown = set(data) - set(CATEGORY_ORDER)
        if unknown:
            raise ValueError(f"conditions.{sorted(unknown)[0]}: unknown field")
        kwargs: dict = {}
        if "instruments" in data:
            raw = data["instruments"]
            if not isinstance(raw, list):
                raise ValueError("conditions.instruments: expected a list")
            insts = set()
            for i, c in enumerate(raw):
                if not isinstance(c, int) or isinstance(c, bool):
                    raise ValueError(f"conditions.instruments[{i}]: expected an integer")
                if not 0 <= c <= DRUM_CLASS:
                    raise ValueError(f"conditions.instruments[{i}]: class out of range: {c}")
                insts.add(c)
            if not insts:
                raise ValueError("conditions.instruments: must be non-empty when present")
            kwargs["instruments"] = frozenset(insts)
        if "chords" in data:
            raw = data["chords"]
            if not isinstance(raw, list):
                raise ValueError("conditions.chords: expected a list")
            chords = set()
            for i, entry in enumerate(raw):
                if not isinstance(entry, dict) or set(entry) != {"root", "quality"}:
                    raise ValueError(
                        f"conditions.chords[{i}]: expected an object with root and quality"
                    )
                try:
                    chords.add(ChordLabel(entry["root"], entry["quality"]))
                except (ValueError, TypeError) as exc:
                    raise ValueError(f"conditions.chords[{i}]: {exc}") from exc
            if not chords:
                raise ValueError("conditions.chords: must be non-empty when present")
            kwargs["chords"] = frozenset(chords)
        for name in ("mean_tempo", "mean_pitch", "mean_velocity", "mean_duration"):
            if name in data:
                value = data[name]
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ValueError(f"conditions.{name}: expected a number")
                kwargs[name] = float(value)
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ValueError(f"conditions.{exc}") from exc


def extract_metadata(song: NoteSong) -> ConditionSet:
    """All conditions observable in a window; raises EmptySong on no notes."""
    if not song.notes:
        raise EmptySong("metadata is undefined for a window without notes")
    melodic = [n.pitch for n in song.notes if n.instrument_class != DRUM_CLASS]
    weighted = 0.0
    for i, (unit, bpm) in enumerate(song.tempo_changes):
        end = song.tempo_changes[i + 1][0] if i + 1 < len(song.tempo_changes) else TOTAL_UNITS
        weighted += bpm * (end - unit)
    chords = frozenset(lab for lab in half_bar_chords(song) if lab is not None)
    return ConditionSet(
        instruments=frozenset(n.instrument_class for n in song.notes),
        chords=chords or None,
        mean_tempo=weighted / TOTAL_UNITS,
        mean_pitch=sum(melodic) / len(melodic) if melodic else None,
        mean_velocity=sum(n.velocity for n in song.notes) / len(song.notes),
        mean_duration=sum(n.duration for n in song.notes) / len(song.notes),
    )


def quantize_conditions(conds: ConditionSet, vocab: Vocabulary = VOCAB) -> ConditionSet:
    """Snap mean values onto the bins their prefix tokens will state."""
    kwargs: dict = {}
    if conds.mean_tempo is not None:
        kwargs["mean_tempo"] = vocab.tempo_center(vocab.tempo_bin(conds.mean_tempo))
    if conds.mean_pitch is not None:
        kwargs["mean_pitch"] = float(vocab.pitch_value(conds.mean_pitch))
    if conds.mean_velocity is not None:
        kwargs["mean_velocity"] = float(vocab.velocity_center(vocab.velocity_bin(conds.mean_velocity)))
    if conds.mean_duration is not None:
        kwargs["mean_duration"] = float(vocab.duration_value(vocab.duration_bin(conds.mean_duration)))
    return replace(conds, **kwargs)


def encode_prefix(conds: ConditionSet, vocab: Vocabulary = VOCAB) -> tuple[int, ...]:
    """Token prefix stating the present conditions, ending with sep."""
    ids: list[int] = []
    if conds.instruments is not None:
        ids.extend(vocab.instrument_id(c) for c in sorted(conds.instruments))
    if conds.chords is not None:
        ids.extend(vocab.chord_token(c) for c in sorted(conds.chords, key=ChordLabel.sort_key))
    if conds.mean_tempo is not None:
        ids.append(vocab.tempo_id(vocab.tempo_bin(conds.mean_tempo)))
    if conds.mean_pitch is not None:
        ids.append(vocab.pitch_id(vocab.pitch_value(conds.mean_pitch)))
    if conds.mean_velocity is not None:
        ids.append(vocab.velocity_id(vocab.velocity_bin(conds.mean_velocity)))
    if conds.mean_duration is not None:
        ids.append(vocab.duration_id(vocab.duration_bin(conds.mean_duration)))
    ids.append(vocab.sep)
    return tuple(ids)


_PREFIX_STAGE = {
    "instrument": 0,
    "chord": 1,
    "tempo": 2,
    "pitch": 3,
    "velocity": 4,
    "duration": 5,
}


def decode_prefix(ids: tuple[int, ...], vocab: Vocabulary = VOCAB) -> ConditionSet:
    """Inverse of encode_prefix on quantized condition sets."""
    body = list(ids)
    if body and body[-1] == vocab.sep:
        body.pop()
    instruments: set[int] = set()
    chords: set[ChordLabel] = set()
    singles: dict[str, float] = {}
    stage = -1
    for t in body:
        cat = vocab.category_of(t)
        if cat not in _PREFIX_STAGE:
            raise ValueError(f"prefix: unexpected {cat} token {t}")
        s = _PREFIX_STAGE[cat]
        if s < stage or (s == stage and s >= 2):
            raise ValueError(f"prefix: {cat} token out of order")
        stage = s
        idx = vocab.index_of(t)
        if cat == "instrument":
            if idx in instruments:
                raise ValueError(f"prefix: duplicate instrument {idx}")
            instruments.add(idx)
        elif cat == "chord":
            chords.add(vocab.chord_label(t))
        elif cat == "tempo":
            singles["mean_tempo"] = vocab.tempo_center(idx)
        elif cat == "pitch":
            singles["mean_pitch"] = float(idx)
        elif cat == "velocity":
            singles["mean_velocity"] = float(vocab.velocity_center(idx))
        else:
            singles["mean_duration"] = float(vocab.duration_value(idx))
    return ConditionSet(
        instruments=frozenset(instruments) or None,
        chords=frozenset(chords) or None,
        **singles,
    )


@dataclass(frozen=True)
class DropPolicy:
    """Independent whole-category drop with a fixed probability."""

    probability: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"drop probability out of range: {self.probability}")


def apply_drop(
    conds: ConditionSet,
    policy: DropPolicy,
    rng: Optional[random.Random] = None,
) -> ConditionSet:
    """Drop each category with policy.probability.

    A draw is consumed for every category, present or not, so the stream of
    outcomes depends only on the rng state, not on which fields were set.
    """
    if rng is None:
        rng = random.Random(policy.seed)
    kept: dict = {}
    for name in CATEGORY_ORDER:
        dropped = rng.random() < policy.probability
        kept[name] = None if dropped else getattr(conds, name)
    return ConditionSet(**kept)
