"""Standard MIDI file reading and writing for 4-bar multitrack windows.

The time base is a 48-slots-per-bar grid in 4/4, so one window is 192 grid
units. Files are split into consecutive 192-unit windows; each non-empty
window becomes one NoteSong. On write, one tick equals one grid unit
(12 ticks per quarter).

Parsing accepts SMF format 0 and 1 with running status, binds note-offs to
the earliest open onset per (track, channel, pitch), and maps programs to
16 melodic instrument families (program // 8) plus a drum class (16) for
channel 10. Events other than notes, program changes, tempo, and time
signature are dropped. Any time signature other than 4/4 rejects the file.

Writing produces format 1: a conductor track carrying 4/4 and the tempo
map, then one track per instrument class. Tracks get distinct channels
where possible (drums pinned to channel 10); the class is recovered from
the program change on parse, so channel reuse beyond 15 melodic classes
only affects synth playback, not the round trip.
"""

from __future__ import annotations

import bisect
import struct
from dataclasses import dataclass
from typing import Iterable, Optional

POSITIONS_PER_BAR = 48
BAR_COUNT = 4
TOTAL_UNITS = POSITIONS_PER_BAR * BAR_COUNT  # 192
WRITE_TPQ = 12  # 48 slots per 4/4 bar -> 12 per quarter, 1 tick per unit
DEFAULT_BPM = 120.0
DRUM_CHANNEL = 9
DRUM_CLASS = 16
_MAX_MPQ = 0xFFFFFF


def snap_bpm(bpm: float) -> float:
    """Nearest BPM exactly representable as an SMF tempo (60e6 / mpq).

    Tempo metas store integer microseconds per quarter, so only these
    values survive a write/parse cycle unchanged.
    """
    mpq = round(60_000_000.0 / bpm)
    if not 1 <= mpq <= _MAX_MPQ:
        raise ValueError(f"tempo {bpm} BPM is outside the SMF-representable range")
    return 60_000_000.0 / mpq


class MalformedMidi(ValueError):
    """The byte stream is not a readable SMF format 0 or 1 file."""


class UnsupportedTimeSignature(ValueError):
    """The file declares a time signature other than 4/4."""


@dataclass(frozen=True)
class NoteEvent:
    """One note, in grid units relative to its window start."""

    track_index: int
    instrument_class: int
    pitch: int
    velocity: int
    onset: int
    duration: int


@dataclass(frozen=True)
class NoteSong:
    """A canonical 4-bar window of notes plus its tempo map.

    Notes are sorted by (onset, instrument_class, pitch, velocity,
    duration) and track_index is the dense rank of instrument_class among
    the distinct classes present. tempo_changes is (unit, bpm) pairs,
    strictly ascending, starting at unit 0. Construct through from_notes
    unless the input is already canonical.
    """

    notes: tuple[NoteEvent, ...]
    tempo_changes: tuple[tuple[int, float], ...]
    bar_count: int = BAR_COUNT
    time_signature: tuple[int, int] = (4, 4)

    @classmethod
    def from_notes(
        cls,
        notes: Iterable[NoteEvent],
        tempo_changes: Iterable[tuple[int, float]] = ((0, DEFAULT_BPM),),
    ) -> "NoteSong":
        pool = list(notes)
        # A (class, pitch) lane is monophonic: a note ends no later than the
        # next strictly-later onset at the same pitch. Note on/off pairs in a
        # MIDI byte stream cannot express anything else unambiguously, so
        # overlaps are clipped here once and for all.
        lane_onsets: dict[tuple[int, int], list[int]] = {}
        for n in pool:
            lane_onsets.setdefault((n.instrument_class, n.pitch), []).append(n.onset)
        for key in lane_onsets:
            lane_onsets[key] = sorted(set(lane_onsets[key]))
        clipped: list[tuple[NoteEvent, int]] = []
        for n in pool:
            onsets = lane_onsets[(n.instrument_class, n.pitch)]
            nxt = bisect.bisect_right(onsets, n.onset)
            duration = n.duration
            if nxt < len(onsets):
                duration = min(duration, onsets[nxt] - n.onset)
            clipped.append((n, duration))
        # Canonical order. The duration-before-velocity tiebreak matters:
        # same-onset same-pitch notes must leave in ascending duration so
        # the reader's first-off-to-first-on pairing reassembles them.
        clipped.sort(
            key=lambda t: (t[0].onset, t[0].instrument_class, t[0].pitch, t[1], t[0].velocity)
        )
        rank = {c: i for i, c in enumerate(sorted({n.instrument_class for n, _ in clipped}))}
        canon = tuple(
            NoteEvent(
                track_index=rank[n.instrument_class],
                instrument_class=n.instrument_class,
                pitch=n.pitch,
                velocity=n.velocity,
                onset=n.onset,
                duration=d,
            )
            for n, d in clipped
        )
        song = cls(notes=canon, tempo_changes=tuple((int(u), float(b)) for u, b in tempo_changes))
        song.validate()
        return song

    def validate(self) -> None:
        """Raise ValueError naming the first violated field."""
        if self.bar_count != BAR_COUNT:
            raise ValueError(f"bar_count: expected {BAR_COUNT}, got {self.bar_count}")
        if tuple(self.time_signature) != (4, 4):
            raise ValueError(f"time_signature: only 4/4 is supported, got {self.time_signature}")
        rank = {c: i for i, c in enumerate(sorted({n.instrument_class for n in self.notes}))}
        prev_key = None
        for i, n in enumerate(self.notes):
            where = f"notes[{i}]"
            if not 0 <= n.instrument_class <= DRUM_CLASS:
                raise ValueError(f"{where}.instrument_class: out of range: {n.instrument_class}")
            if not 0 <= n.pitch < 128:
                raise ValueError(f"{where}.pitch: out of range: {n.pitch}")
            if not 1 <= n.velocity < 128:
                raise ValueError(f"{where}.velocity: out of range: {n.velocity}")
            if not 0 <= n.onset < TOTAL_UNITS:
                raise ValueError(f"{where}.onset: out of range: {n.onset}")
            if n.duration < 1:
                raise ValueError(f"{where}.duration: must be at least 1: {n.duration}")
            if n.onset + n.duration > TOTAL_UNITS:
                raise ValueError(
                    f"{where}.duration: note extends past the window end "
                    f"({n.onset} + {n.duration} > {TOTAL_UNITS})"
                )
            if n.track_index != rank[n.instrument_class]:
                raise ValueError(
                    f"{where}.track_index: expected {rank[n.instrument_class]}, got {n.track_index}"
                )
            key = (n.onset, n.instrument_class, n.pitch, n.duration, n.velocity)
            if prev_key is not None and key < prev_key:
                raise ValueError(f"{where}: notes are not in canonical order")
            prev_key = key
        lanes: dict[tuple[int, int], list[NoteEvent]] = {}
        for n in self.notes:
            lanes.setdefault((n.instrument_class, n.pitch), []).append(n)
        for members in lanes.values():
            for a, n in enumerate(members):
                for later in members[a + 1 :]:
                    if later.onset > n.onset:
                        if n.onset + n.duration > later.onset:
                            raise ValueError(
                                f"notes: a pitch-{n.pitch} note at onset {n.onset} overlaps "
                                f"the next one at {later.onset} on the same instrument"
                            )
                        break
        if not self.tempo_changes:
            raise ValueError("tempo_changes: must contain at least one entry")
        if self.tempo_changes[0][0] != 0:
            raise ValueError(
                f"tempo_changes[0]: first entry must sit at unit 0, got {self.tempo_changes[0][0]}"
            )
        prev_u = -1
        for i, (u, bpm) in enumerate(self.tempo_changes):
            if not 0 <= u < TOTAL_UNITS:
                raise ValueError(f"tempo_changes[{i}]: unit out of range: {u}")
            if u <= prev_u:
                raise ValueError(f"tempo_changes[{i}]: units must be strictly ascending")
            if not bpm > 0:
                raise ValueError(f"tempo_changes[{i}]: BPM must be positive: {bpm}")
            prev_u = u

    def instrument_classes(self) -> tuple[int, ...]:
        return tuple(sorted({n.instrument_class for n in self.notes}))

    def to_json_dict(self) -> dict:
        return {
            "notes": [
                {
                    "track": n.track_index,
                    "instrument": n.instrument_class,
                    "pitch": n.pitch,
                    "velocity": n.velocity,
                    "onset": n.onset,
                    "duration": n.duration,
                }
                for n in self.notes
            ],
            "tempo_changes": [[u, bpm] for u, bpm in self.tempo_changes],
            "bar_count": self.bar_count,
            "time_signature": list(self.time_signature),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "NoteSong":
        try:
            notes = [
                NoteEvent(
                    track_index=0,  # recomputed by from_notes
                    instrument_class=int(entry["instrument"]),
                    pitch=int(entry["pitch"]),
                    velocity=int(entry["velocity"]),
                    onset=int(entry["onset"]),
                    duration=int(entry["duration"]),
                )
                for entry in data["notes"]
            ]
            tempo = [(int(u), float(b)) for u, b in data.get("tempo_changes", [(0, DEFAULT_BPM)])]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"bad note list payload: {exc}") from exc
        return cls.from_notes(notes, tempo)


# --------------------------------------------------------------------------
# reading


def _round_div(numer: int, denom: int) -> int:
    """round(numer / denom) with halves up, in exact integer arithmetic."""
    return (2 * numer + denom) // (2 * denom)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def need(self, n: int) -> None:
        if self.pos + n > len(self.data):
            raise MalformedMidi(f"truncated at byte {self.pos}, needed {n} more")

    def take(self, n: int) -> bytes:
        self.need(n)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def vlq(self) -> int:
        value = 0
        for _ in range(4):
            byte = self.u8()
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise MalformedMidi(f"variable-length quantity too long at byte {self.pos}")


@dataclass
class _RawNote:
    track: int
    channel: int
    pitch: int
    velocity: int
    on_tick: int
    program: int
    off_tick: Optional[int] = None


def _parse_track(chunk: bytes, track: int, notes: list[_RawNote], tempos: list[tuple[int, int]]) -> int:
    """Scan one MTrk chunk; returns the last tick seen.

    Appends raw notes (off_tick possibly still None) and (tick, mpq) tempo
    events; raises UnsupportedTimeSignature on any non-4/4 meta.
    """
    rd = _Reader(chunk)
    tick = 0
    running: Optional[int] = None
    programs: dict[int, int] = {}
    open_notes: dict[tuple[int, int], list[_RawNote]] = {}

    def note_on(channel: int, pitch: int, velocity: int) -> None:
        raw = _RawNote(track, channel, pitch, velocity, tick, programs.get(channel, 0))
        open_notes.setdefault((channel, pitch), []).append(raw)
        notes.append(raw)

    def note_off(channel: int, pitch: int) -> None:
        queue = open_notes.get((channel, pitch))
        if queue:
            queue.pop(0).off_tick = tick

    while rd.pos < len(chunk):
        tick += rd.vlq()
        rd.need(1)
        first = chunk[rd.pos]
        if first & 0x80:
            status = rd.u8()
            if status < 0xF0:
                running = status
        else:
            if running is None:
                raise MalformedMidi(f"data byte with no running status at byte {rd.pos}")
            status = running
        kind, channel = status & 0xF0, status & 0x0F
        if kind == 0x80:
            pitch, _vel = rd.take(2)
            note_off(channel, pitch)
        elif kind == 0x90:
            pitch, vel = rd.take(2)
            if vel == 0:
                note_off(channel, pitch)
            else:
                note_on(channel, pitch, vel)
        elif kind in (0xA0, 0xB0, 0xE0):
            rd.take(2)
        elif kind == 0xC0:
            programs[channel] = rd.u8()
        elif kind == 0xD0:
            rd.take(1)
        elif status in (0xF0, 0xF7):
            rd.take(rd.vlq())
        elif status == 0xFF:
            meta = rd.u8()
            body = rd.take(rd.vlq())
            if meta == 0x2F:
                break
            if meta == 0x51:
                if len(body) != 3:
                    raise MalformedMidi(f"tempo meta of length {len(body)}")
                tempos.append((tick, int.from_bytes(body, "big")))
            elif meta == 0x58:
                if len(body) < 2:
                    raise MalformedMidi(f"time signature meta of length {len(body)}")
                nn, dd = body[0], body[1]
                if (nn, 2**dd) != (4, 4):
                    raise UnsupportedTimeSignature(f"time signature {nn}/{2**dd}")
        else:
            raise MalformedMidi(f"unexpected status byte 0x{status:02x} at byte {rd.pos}")
    return tick


def parse_midi(data: bytes) -> list[NoteSong]:
    """Split an SMF byte string into canonical non-empty 4-bar windows."""
    rd = _Reader(data)
    if rd.take(4) != b"MThd":
        raise MalformedMidi("missing MThd header")
    header_len = struct.unpack(">I", rd.take(4))[0]
    if header_len < 6:
        raise MalformedMidi(f"header chunk of length {header_len}")
    fmt, ntrks, division = struct.unpack(">HHH", rd.take(6))
    rd.take(header_len - 6)
    if fmt not in (0, 1):
        raise MalformedMidi(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        raise MalformedMidi("SMPTE time division is not supported")
    if division == 0:
        raise MalformedMidi("zero ticks per quarter")

    raw_notes: list[_RawNote] = []
    raw_tempos: list[tuple[int, int]] = []
    last_tick = 0
    tracks_seen = 0
    while tracks_seen < ntrks:
        if rd.pos >= len(data):
            raise MalformedMidi(f"expected {ntrks} tracks, found {tracks_seen}")
        chunk_id = rd.take(4)
        chunk_len = struct.unpack(">I", rd.take(4))[0]
        chunk = rd.take(chunk_len)
        if chunk_id != b"MTrk":
            continue  # alien chunks are skipped whole
        last_tick = max(last_tick, _parse_track(chunk, tracks_seen, raw_notes, raw_tempos))
        tracks_seen += 1

    for raw in raw_notes:
        if raw.off_tick is None:
            raw.off_tick = max(last_tick, raw.on_tick)

    # Quantize the tempo map to grid units; later events at a unit win.
    tempo_map: dict[int, float] = {}
    for tick, mpq in sorted(raw_tempos, key=lambda t: t[0]):
        if mpq <= 0:
            raise MalformedMidi(f"non-positive tempo {mpq}")
        tempo_map[_round_div(tick * WRITE_TPQ, division)] = 60_000_000.0 / mpq
    tempo_units = sorted(tempo_map.items())
    if not tempo_units or tempo_units[0][0] > 0:
        tempo_units.insert(0, (0, DEFAULT_BPM))

    windows: dict[int, list[NoteEvent]] = {}
    for raw in raw_notes:
        onset = _round_div(raw.on_tick * WRITE_TPQ, division)
        duration = max(1, _round_div((raw.off_tick - raw.on_tick) * WRITE_TPQ, division))
        w, local = divmod(onset, TOTAL_UNITS)
        if raw.channel == DRUM_CHANNEL:
            cls = DRUM_CLASS
        else:
            cls = raw.program // 8
        windows.setdefault(w, []).append(
            NoteEvent(
                track_index=0,
                instrument_class=cls,
                pitch=raw.pitch,
                velocity=raw.velocity,
                onset=local,
                duration=min(duration, TOTAL_UNITS - local),
            )
        )

    songs = []
    for w in sorted(windows):
        start = w * TOTAL_UNITS
        active = DEFAULT_BPM
        local_changes: list[tuple[int, float]] = []
        for unit, bpm in tempo_units:
            if unit <= start:
                active = bpm
            elif unit < start + TOTAL_UNITS:
                local_changes.append((unit - start, bpm))
        songs.append(NoteSong.from_notes(windows[w], [(0, active)] + local_changes))
    return songs


# --------------------------------------------------------------------------
# writing


def _vlq_bytes(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _track_chunk(events: list[tuple[int, bytes]], end_tick: int) -> bytes:
    """Serialize (tick, message) pairs, already sorted, plus end-of-track."""
    body = bytearray()
    tick = 0
    for at, message in events:
        body += _vlq_bytes(at - tick)
        body += message
        tick = at
    body += _vlq_bytes(end_tick - tick) + b"\xff\x2f\x00"
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def _melodic_channel(slot: int) -> int:
    channels = [c for c in range(16) if c != DRUM_CHANNEL]
    return channels[slot % len(channels)]


def write_midi(song: NoteSong, repetitions: int = 1) -> bytes:
    """Render a window to SMF format 1 at 12 ticks per quarter.

    repetitions > 1 tiles the window (notes and tempo map) end to end.
    """
    song.validate()
    if not isinstance(repetitions, int) or repetitions < 1:
        raise ValueError(f"repetitions must be a positive integer: {repetitions}")
    end_tick = TOTAL_UNITS * repetitions

    conductor: list[tuple[int, bytes]] = [(0, b"\xff\x58\x04\x04\x02\x18\x08")]
    for rep in range(repetitions):
        for unit, bpm in song.tempo_changes:
            mpq = round(60_000_000.0 / bpm)
            if not 1 <= mpq <= _MAX_MPQ:
                raise ValueError(f"tempo {bpm} BPM is outside the SMF-representable range")
            conductor.append((rep * TOTAL_UNITS + unit, b"\xff\x51\x03" + mpq.to_bytes(3, "big")))
    chunks = [_track_chunk(conductor, end_tick)]

    classes = song.instrument_classes()
    melodic_slot = 0
    for cls in classes:
        if cls == DRUM_CLASS:
            channel = DRUM_CHANNEL
        else:
            channel = _melodic_channel(melodic_slot)
            melodic_slot += 1
        # kind orders note-offs before note-ons sharing a tick, program first
        events: list[tuple[int, int, int, bytes]] = []
        if cls != DRUM_CLASS:
            events.append((0, -1, 0, bytes((0xC0 | channel, cls * 8))))
        for note in song.notes:
            if note.instrument_class != cls:
                continue
            for rep in range(repetitions):
                base = rep * TOTAL_UNITS
                events.append(
                    (base + note.onset, 1, note.pitch, bytes((0x90 | channel, note.pitch, note.velocity)))
                )
                events.append(
                    (base + note.onset + note.duration, 0, note.pitch, bytes((0x80 | channel, note.pitch, 0x40)))
                )
        events.sort(key=lambda e: e[:3])
        chunks.append(_track_chunk([(tick, msg) for tick, _, _, msg in events], end_tick))

    header = b"MThd" + struct.pack(">IHHH", 6, 1, len(chunks), WRITE_TPQ)
    return header + b"".join(chunks)
