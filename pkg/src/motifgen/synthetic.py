"""Seeded synthetic corpus of 4-bar windows with informative metadata.

Each piece draws style latents first (tempo level, dynamics level, melody
register, rhythm profile, instrument combo, key and chord progression) and
then realizes notes from them, so every condition category carries real
information about the body: the stated tempo bin is the piece's tempo, the
velocity bin pins note dynamics, the chord set is the progression actually
sounded by the pad track, and so on. A model given the prefix can resolve
most of this; a model without it has to marginalize. That contrast is what
conditioning experiments on this corpus measure.

Everything is driven by one integer seed; piece i of a corpus depends only
on (seed, i).
"""

from __future__ import annotations

import random

from .midi_io import DRUM_CLASS, NoteEvent, NoteSong, snap_bpm
from .vocab import TEMPO_CENTERS, VELOCITY_CENTERS

# Style menus. Tempo/velocity entries are bin indices, spaced so neighbors
# never blur into one another after quantization.
_TEMPO_LEVELS = (18, 21, 24, 27)
_VELOCITY_LEVELS = (12, 16, 20, 24)
_REGISTERS = (48, 55, 62, 69)
_RHYTHMS = (
    {"step": 12, "durations": (3, 6, 6, 12), "rest": 0.3},
    {"step": 12, "durations": (12, 24, 24, 48), "rest": 0.25},
)
_COMBOS = (
    (0, 4),
    (0, 8, DRUM_CLASS),
    (3, 11),
    (2, 5, DRUM_CLASS),
    (1, 9),
    (6, 12),
    (0, 13, DRUM_CLASS),
    (7, 10),
)
_KEYS = (0, 2, 5, 7, 9)
# scale-degree roots and qualities of the four diatonic chords used
_PROGRESSIONS = (
    (0, 5, 7, 0, 0, 5, 7, 0),
    (0, 9, 5, 7, 0, 9, 5, 7),
    (0, 7, 9, 5, 0, 7, 9, 5),
    (0, 0, 5, 5, 7, 7, 0, 0),
)
_DEGREE_QUALITY = {0: "maj", 5: "maj", 7: "maj", 9: "min"}


def _chord_tones(key: int, degree: int) -> tuple[int, ...]:
    root = (key + degree) % 12
    intervals = (0, 4, 7) if _DEGREE_QUALITY[degree] == "maj" else (0, 3, 7)
    return tuple((root + iv) % 12 for iv in intervals)


def synth_song(seed: int, index: int) -> NoteSong:
    """Deterministically realize piece `index` of the corpus at `seed`."""
    rng = random.Random(seed * 1_000_003 + index)
    tempo_bin = rng.choice(_TEMPO_LEVELS)
    velocity_bin = rng.choice(_VELOCITY_LEVELS)
    register = rng.choice(_REGISTERS)
    rhythm = rng.choice(_RHYTHMS)
    combo = rng.choice(_COMBOS)
    key = rng.choice(_KEYS)
    progression = rng.choice(_PROGRESSIONS)

    velocity = VELOCITY_CENTERS[velocity_bin]
    pad_instrument = combo[0]
    melody_instrument = combo[1]
    notes: list[NoteEvent] = []

    # Pad: block triads over every half bar; these make the chord detector
    # report exactly the progression, and dominate the pitch-class profile.
    for half, degree in enumerate(progression):
        base = half * 24
        root = (key + degree) % 12
        intervals = (0, 4, 7) if _DEGREE_QUALITY[degree] == "maj" else (0, 3, 7)
        for iv in intervals:
            notes.append(
                NoteEvent(0, pad_instrument, 48 + ((root + iv) % 12), velocity, base, 24)
            )

    # Melody: chord tones around the register, on the rhythm profile's grid.
    step = rhythm["step"]
    for onset in range(0, 192, step):
        if rng.random() < rhythm["rest"]:
            continue
        tones = _chord_tones(key, progression[onset // 24])
        pc = rng.choice(tones)
        pitch = register + ((pc - register) % 12)
        if rng.random() < 0.15:
            pitch += rng.choice((-12, 12))
        pitch = max(0, min(127, pitch))
        duration = rng.choice(rhythm["durations"])
        vel = velocity + rng.choice((-4, 0, 0, 4)) if rng.random() < 0.3 else velocity
        notes.append(
            NoteEvent(
                0,
                melody_instrument,
                pitch,
                max(1, min(127, vel)),
                onset,
                min(duration, 192 - onset),
            )
        )

    # Drums, when the combo calls for them: a fixed kit pattern at the
    # piece's dynamic level.
    if DRUM_CLASS in combo:
        for bar in range(4):
            base = bar * 48
            notes.append(NoteEvent(0, DRUM_CLASS, 36, velocity, base, 6))
            notes.append(NoteEvent(0, DRUM_CLASS, 38, velocity, base + 24, 6))
            notes.append(NoteEvent(0, DRUM_CLASS, 42, max(1, velocity - 8), base + 12, 3))

    # Snapped to a MIDI-exact value so the corpus survives write/parse
    # cycles; quantization still lands it in the intended bin.
    return NoteSong.from_notes(notes, [(0, snap_bpm(TEMPO_CENTERS[tempo_bin]))])


def synth_corpus(count: int, seed: int = 0) -> list[NoteSong]:
    if count < 1:
        raise ValueError(f"corpus size must be positive: {count}")
    return [synth_song(seed, i) for i in range(count)]
