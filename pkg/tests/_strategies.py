"""Shared hypothesis strategies for randomized song and sequence properties.

Two song strategies with different fixed-point guarantees:

  midi_exact_songs   arbitrary velocities/durations, duplicate and even
                     overlapping notes (canonicalization clips them), tempo
                     values representable as whole microseconds per quarter.
                     Fixed points of parse_midi(write_midi(s, 1)).

  bin_exact_songs    every velocity, duration, and tempo sits exactly on a
                     vocabulary bin value, durations never cross the next
                     onset in their lane, and consecutive tempo bins differ.
                     Fixed points of detokenize(tokenize(s)).
"""

from __future__ import annotations

from hypothesis import strategies as st

from motifgen.midi_io import DRUM_CLASS, TOTAL_UNITS, NoteEvent, NoteSong, snap_bpm
from motifgen.vocab import DURATION_VALUES, TEMPO_CENTERS, VELOCITY_CENTERS


@st.composite
def midi_exact_songs(draw) -> NoteSong:
    n = draw(st.integers(min_value=1, max_value=32))
    notes = []
    for _ in range(n):
        onset = draw(st.integers(0, TOTAL_UNITS - 1))
        notes.append(
            NoteEvent(
                track_index=0,
                instrument_class=draw(st.integers(0, DRUM_CLASS)),
                pitch=draw(st.integers(0, 127)),
                velocity=draw(st.integers(1, 127)),
                onset=onset,
                duration=draw(st.integers(1, TOTAL_UNITS - onset)),
            )
        )
    extra_units = draw(st.sets(st.integers(1, TOTAL_UNITS - 1), max_size=3))
    tempos = [
        (unit, snap_bpm(draw(st.floats(16.0, 256.0))))
        for unit in [0] + sorted(extra_units)
    ]
    return NoteSong.from_notes(notes, tempos)


@st.composite
def bin_exact_songs(draw, min_notes: int = 0) -> NoteSong:
    n = draw(st.integers(min_value=min_notes, max_value=24))
    heads = [
        (
            draw(st.integers(0, DRUM_CLASS)),
            draw(st.integers(0, 127)),
            draw(st.integers(0, TOTAL_UNITS - 1)),
        )
        for _ in range(n)
    ]
    lane_onsets: dict[tuple[int, int], list[int]] = {}
    for cls, pitch, onset in heads:
        lane_onsets.setdefault((cls, pitch), []).append(onset)
    notes = []
    for cls, pitch, onset in heads:
        later = [o for o in lane_onsets[(cls, pitch)] if o > onset]
        gap = (min(later) - onset) if later else (TOTAL_UNITS - onset)
        duration = draw(st.sampled_from([d for d in DURATION_VALUES if d <= gap]))
        velocity = draw(st.sampled_from(VELOCITY_CENTERS))
        notes.append(
            NoteEvent(
                track_index=0,
                instrument_class=cls,
                pitch=pitch,
                velocity=velocity,
                onset=onset,
                duration=duration,
            )
        )
    n_tempo = draw(st.integers(1, 3))
    units = [0] + sorted(draw(st.sets(st.integers(1, TOTAL_UNITS - 1), max_size=n_tempo - 1)))
    bins = [draw(st.integers(0, len(TEMPO_CENTERS) - 1))]
    for _ in units[1:]:
        step = draw(st.integers(1, len(TEMPO_CENTERS) - 1))
        bins.append((bins[-1] + step) % len(TEMPO_CENTERS))
    tempos = [(u, TEMPO_CENTERS[b]) for u, b in zip(units, bins)]
    return NoteSong.from_notes(notes, tempos)
