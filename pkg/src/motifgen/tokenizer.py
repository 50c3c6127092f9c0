"""Bar/position event tokenization of 4-bar windows, plus its grammar.

A window serializes as four bar groups followed by eos. Each bar opens with
the bar token and lists its occupied positions in ascending order. A
position group is:

    position [tempo] [chord] {instrument pitch velocity duration}*

The tempo slot appears exactly where the binned tempo changes (and always
at the first group of bar 0, so every sequence states its tempo). The
chord slot exists only at positions 0 and 24, when template matching finds
a chord over that half bar. Notes are sorted by (instrument_class, pitch,
duration, velocity); drums use the pitch_drum category. Empty position
groups never occur and are rejected by the validator.

The same automaton that validates sequences serves as the legality mask
for grammar-constrained sampling: GrammarState.allowed_mask() is the set
of ids that may come next.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .chords import detect_chord
from .midi_io import (
    BAR_COUNT,
    DRUM_CLASS,
    POSITIONS_PER_BAR,
    TOTAL_UNITS,
    NoteEvent,
    NoteSong,
)
from .vocab import VOCAB, ChordLabel, Vocabulary

HALF_BAR = POSITIONS_PER_BAR // 2  # 24 units
CHORD_POSITIONS = (0, HALF_BAR)


class InvalidSyntax(ValueError):
    """A token sequence violates the grammar; index points at the first bad token."""

    def __init__(self, index: int, message: str) -> None:
        super().__init__(f"index {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class TokenSequence:
    """Immutable id sequence tagged with its id space ("base" or "bpe")."""

    ids: tuple[int, ...]
    space: str = "base"

    def __post_init__(self) -> None:
        if self.space not in ("base", "bpe"):
            raise ValueError(f"unknown token space: {self.space!r}")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class SyntaxReport:
    valid: bool
    error_index: Optional[int] = None
    message: Optional[str] = None


def half_bar_chords(song: NoteSong) -> list[Optional[ChordLabel]]:
    """Detected chord for each of the 8 half-bar spans (None where none)."""
    labels: list[Optional[ChordLabel]] = []
    for h in range(2 * BAR_COUNT):
        lo, hi = h * HALF_BAR, (h + 1) * HALF_BAR
        weights = [0.0] * 12
        for n in song.notes:
            if n.instrument_class == DRUM_CLASS:
                continue
            overlap = min(n.onset + n.duration, hi) - max(n.onset, lo)
            if overlap > 0:
                weights[n.pitch % 12] += overlap
        labels.append(detect_chord(weights))
    return labels


def _effective_tempo_events(song: NoteSong, vocab: Vocabulary) -> list[tuple[int, int]]:
    """(unit, tempo bin) pairs where the binned tempo actually changes."""
    events: list[tuple[int, int]] = []
    last_bin = None
    for unit, bpm in song.tempo_changes:
        b = vocab.tempo_bin(bpm)
        if b != last_bin:
            events.append((unit, b))
            last_bin = b
    return events


def tokenize(song: NoteSong, vocab: Vocabulary = VOCAB) -> TokenSequence:
    """Serialize a canonical window into base-space event ids."""
    song.validate()
    tempo_at = dict(_effective_tempo_events(song, vocab))
    chord_at = {
        h * HALF_BAR: label
        for h, label in enumerate(half_bar_chords(song))
        if label is not None
    }
    notes_at: dict[int, list[NoteEvent]] = {}
    for n in song.notes:  # already in canonical order
        notes_at.setdefault(n.onset, []).append(n)

    occupied = sorted(set(tempo_at) | set(chord_at) | set(notes_at))
    ids: list[int] = []
    for bar in range(BAR_COUNT):
        ids.append(vocab.bar)
        lo = bar * POSITIONS_PER_BAR
        for unit in occupied:
            if not lo <= unit < lo + POSITIONS_PER_BAR:
                continue
            ids.append(vocab.position_id(unit - lo))
            if unit in tempo_at:
                ids.append(vocab.tempo_id(tempo_at[unit]))
            if unit in chord_at:
                ids.append(vocab.chord_token(chord_at[unit]))
            for n in notes_at.get(unit, ()):
                ids.append(vocab.instrument_id(n.instrument_class))
                if n.instrument_class == DRUM_CLASS:
                    ids.append(vocab.pitch_drum_id(n.pitch))
                else:
                    ids.append(vocab.pitch_id(n.pitch))
                ids.append(vocab.velocity_id(vocab.velocity_bin(n.velocity)))
                ids.append(vocab.duration_id(vocab.duration_bin(n.duration)))
    ids.append(vocab.eos)
    return TokenSequence(tuple(ids))


class GrammarState:
    """Incremental recognizer for the window grammar.

    Feed accepted tokens one at a time; allowed_mask() gives the legal next
    ids. The start state accepts only the bar token; the accept state is
    reached by eos after the fourth bar.
    """

    __slots__ = ("vocab", "n_bars", "last_pos", "cur_pos", "phase", "bar0_tempo_done")

    def __init__(self, vocab: Vocabulary = VOCAB) -> None:
        self.vocab = vocab
        self.n_bars = 0
        self.last_pos: Optional[int] = None
        self.cur_pos = 0
        self.phase = "start"
        self.bar0_tempo_done = False

    def copy(self) -> "GrammarState":
        dup = GrammarState(self.vocab)
        dup.n_bars = self.n_bars
        dup.last_pos = self.last_pos
        dup.cur_pos = self.cur_pos
        dup.phase = self.phase
        dup.bar0_tempo_done = self.bar0_tempo_done
        return dup

    @property
    def complete(self) -> bool:
        return self.phase == "done"

    def _group_exit_ranges(self) -> list[tuple[int, int]]:
        """Ids that close the current position group: next position, bar, eos."""
        v = self.vocab
        out = []
        plo, phi = v.range("position")
        first = plo if self.last_pos is None else plo + self.last_pos + 1
        if first < phi:
            out.append((first, phi))
        if self.n_bars < BAR_COUNT:
            out.append((v.bar, v.bar + 1))
        else:
            out.append((v.eos, v.eos + 1))
        return out

    def allowed_ranges(self) -> list[tuple[int, int]]:
        v = self.vocab
        if self.phase == "start":
            return [(v.bar, v.bar + 1)]
        if self.phase == "done":
            return []
        if self.phase == "bar":
            plo, phi = v.range("position")
            if self.n_bars == 1 and not self.bar0_tempo_done:
                return [(plo, phi)]  # bar 0 must open a group carrying the tempo
            out = [(plo, phi)]
            if self.n_bars < BAR_COUNT:
                out.append((v.bar, v.bar + 1))
            else:
                out.append((v.eos, v.eos + 1))
            return out
        if self.phase == "pos_head":
            if not self.bar0_tempo_done:
                return [v.range("tempo")]
            out = [v.range("tempo")]
            if self.cur_pos in CHORD_POSITIONS:
                out.append(v.range("chord"))
            out.append(v.range("instrument"))
            return out
        if self.phase == "after_tempo":
            out = []
            if self.cur_pos in CHORD_POSITIONS:
                out.append(v.range("chord"))
            out.append(v.range("instrument"))
            return out + self._group_exit_ranges()
        if self.phase in ("after_chord", "in_notes"):
            return [v.range("instrument")] + self._group_exit_ranges()
        if self.phase == "expect_pitch":
            return [v.range("pitch")]
        if self.phase == "expect_drum":
            return [v.range("pitch_drum")]
        if self.phase == "expect_vel":
            return [v.range("velocity")]
        if self.phase == "expect_dur":
            return [v.range("duration")]
        raise AssertionError(f"unreachable phase {self.phase}")

    def allowed_mask(self) -> np.ndarray:
        mask = np.zeros(self.vocab.size, dtype=bool)
        for lo, hi in self.allowed_ranges():
            mask[lo:hi] = True
        return mask

    def permits(self, token_id: int) -> bool:
        return any(lo <= token_id < hi for lo, hi in self.allowed_ranges())

    def describe_expectation(self) -> str:
        names = []
        v = self.vocab
        for lo, hi in self.allowed_ranges():
            names.append(v.category_of(lo) if v.category_of(lo) != "special" else "eos")
        return " or ".join(dict.fromkeys(names)) if names else "nothing (sequence complete)"

    def feed(self, token_id: int) -> None:
        if not self.permits(token_id):
            raise ValueError(
                f"token {token_id} not allowed here, expected {self.describe_expectation()}"
            )
        v = self.vocab
        cat = v.category_of(token_id)
        if cat == "bar":
            self.n_bars += 1
            self.last_pos = None
            self.phase = "bar"
        elif cat == "position":
            self.cur_pos = v.index_of(token_id)
            self.last_pos = self.cur_pos
            self.phase = "pos_head"
        elif cat == "tempo":
            self.bar0_tempo_done = True
            self.phase = "after_tempo"
        elif cat == "chord":
            self.phase = "after_chord"
        elif cat == "instrument":
            cls = v.index_of(token_id)
            self.phase = "expect_drum" if cls == DRUM_CLASS else "expect_pitch"
        elif cat in ("pitch", "pitch_drum"):
            self.phase = "expect_vel"
        elif cat == "velocity":
            self.phase = "expect_dur"
        elif cat == "duration":
            self.phase = "in_notes"
        else:  # special: only eos is ever permitted
            self.phase = "done"


def validate_syntax(ids: Iterable[int], vocab: Vocabulary = VOCAB) -> SyntaxReport:
    """Check a base-space body sequence; report the first offending index."""
    state = GrammarState(vocab)
    seq = tuple(ids)
    for i, t in enumerate(seq):
        if not isinstance(t, (int, np.integer)) or not 0 <= t < vocab.size:
            return SyntaxReport(False, i, f"id {t!r} outside the vocabulary")
        if not state.permits(t):
            got = vocab.category_of(t)
            return SyntaxReport(
                False, i, f"unexpected {got} token, expected {state.describe_expectation()}"
            )
        state.feed(t)
    if not state.complete:
        return SyntaxReport(False, len(seq), "sequence ends before eos")
    return SyntaxReport(True)


def detokenize(seq: TokenSequence, vocab: Vocabulary = VOCAB) -> NoteSong:
    """Reconstruct the canonical NoteSong a valid base sequence denotes.

    Chord tokens are advisory and dropped; durations clip at the window
    end; if the first stated tempo sits past unit 0 it is pulled back to 0.
    """
    if seq.space != "base":
        raise ValueError("detokenize expects a base-space sequence")
    report = validate_syntax(seq.ids, vocab)
    if not report.valid:
        raise InvalidSyntax(report.error_index, report.message or "invalid sequence")

    notes: list[NoteEvent] = []
    tempos: list[tuple[int, float]] = []
    bar = -1
    unit = 0
    cur_class = 0
    cur_pitch = 0
    cur_velocity = 1
    for t in seq.ids:
        cat = vocab.category_of(t)
        if cat == "bar":
            bar += 1
        elif cat == "position":
            unit = bar * POSITIONS_PER_BAR + vocab.index_of(t)
        elif cat == "tempo":
            tempos.append((unit, vocab.tempo_center(vocab.index_of(t))))
        elif cat == "instrument":
            cur_class = vocab.index_of(t)
        elif cat in ("pitch", "pitch_drum"):
            cur_pitch = vocab.index_of(t)
        elif cat == "velocity":
            cur_velocity = vocab.velocity_center(vocab.index_of(t))
        elif cat == "duration":
            duration = min(vocab.duration_value(vocab.index_of(t)), TOTAL_UNITS - unit)
            notes.append(
                NoteEvent(
                    track_index=0,
                    instrument_class=cur_class,
                    pitch=cur_pitch,
                    velocity=cur_velocity,
                    onset=unit,
                    duration=duration,
                )
            )
        # chord and eos tokens carry no note-level state
    if tempos[0][0] != 0:
        tempos[0] = (0, tempos[0][1])
    return NoteSong.from_notes(notes, tempos)


# --------------------------------------------------------------------------
# token file format: one sequence per line, whitespace-separated decimal ids


def sequences_to_text(seqs: Iterable[TokenSequence]) -> str:
    return "".join(" ".join(str(t) for t in s.ids) + "\n" for s in seqs)


def text_to_sequences(text: str, space: str = "base") -> list[TokenSequence]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line:
            out.append(TokenSequence(tuple(int(tok) for tok in line.split()), space))
    return out
