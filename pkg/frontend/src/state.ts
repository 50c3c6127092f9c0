/**
 * Editor state: the note list being edited, selected tracks, playtime
 * (repetitions), and an undo history. All mutations snapshot first, so
 * undo restores the exact previous state. Pure helpers mirror the
 * service's canonical form so a song the client calls valid is one the
 * render endpoint accepts.
 */

import type { NoteJson, NoteSongJson } from "./types.js";
import { BAR_COUNT, DRUM_CLASS, TOTAL_UNITS } from "./types.js";

/** A note as edited; `track` is derived on export, not stored. */
export interface EditorNote {
  instrument: number;
  pitch: number;
  velocity: number;
  onset: number;
  duration: number;
}

export interface EditorSnapshot {
  notes: EditorNote[];
  tempoChanges: [number, number][];
  repetitions: number;
  emptyClasses: number[];
}

/** Dense track rank per instrument class, matching the service. */
export function computeTrackRanks(classes: Iterable<number>): Map<number, number> {
  const sorted = [...new Set(classes)].sort((a, b) => a - b);
  return new Map(sorted.map((c, i) => [c, i]));
}

/**
 * Sort notes into canonical order and assign track ranks. Same key the
 * service uses: (onset, instrument, pitch, duration, velocity).
 */
export function canonicalizeNotes(notes: readonly EditorNote[]): NoteJson[] {
  const ranks = computeTrackRanks(notes.map((n) => n.instrument));
  return notes
    .map((n) => ({ ...n, track: ranks.get(n.instrument)! }))
    .sort(
      (a, b) =>
        a.onset - b.onset ||
        a.instrument - b.instrument ||
        a.pitch - b.pitch ||
        a.duration - b.duration ||
        a.velocity - b.velocity,
    );
}

/**
 * Clip same-(class, pitch) overlaps the way the service does: a note
 * ends no later than the next strictly-later onset on its lane.
 */
export function clipLaneOverlaps(notes: readonly EditorNote[]): EditorNote[] {
  const laneOnsets = new Map<string, number[]>();
  for (const n of notes) {
    const key = `${n.instrument}:${n.pitch}`;
    let arr = laneOnsets.get(key);
    if (!arr) laneOnsets.set(key, (arr = []));
    arr.push(n.onset);
  }
  for (const arr of laneOnsets.values()) arr.sort((a, b) => a - b);
  return notes.map((n) => {
    const onsets = laneOnsets.get(`${n.instrument}:${n.pitch}`)!;
    let duration = n.duration;
    for (const o of onsets) {
      if (o > n.onset) {
        duration = Math.min(duration, o - n.onset);
        break;
      }
    }
    return duration === n.duration ? n : { ...n, duration };
  });
}

/**
 * Mirror of the service's song validation. Returns null when the song
 * would be accepted by the render endpoint, else the first problem.
 * Lane overlaps are not errors — the service clips them on parse.
 */
export function validateSong(song: NoteSongJson): string | null {
  if (song.bar_count !== BAR_COUNT) {
    return `bar_count: expected ${BAR_COUNT}, got ${song.bar_count}`;
  }
  const [num, den] = song.time_signature;
  if (num !== 4 || den !== 4) {
    return `time_signature: only 4/4 is supported`;
  }
  for (let i = 0; i < song.notes.length; i++) {
    const n = song.notes[i]!;
    const where = `notes[${i}]`;
    if (!Number.isInteger(n.instrument) || n.instrument < 0 || n.instrument > DRUM_CLASS) {
      return `${where}.instrument: out of range: ${n.instrument}`;
    }
    if (!Number.isInteger(n.pitch) || n.pitch < 0 || n.pitch > 127) {
      return `${where}.pitch: out of range: ${n.pitch}`;
    }
    if (!Number.isInteger(n.velocity) || n.velocity < 1 || n.velocity > 127) {
      return `${where}.velocity: out of range: ${n.velocity}`;
    }
    if (!Number.isInteger(n.onset) || n.onset < 0 || n.onset >= TOTAL_UNITS) {
      return `${where}.onset: out of range: ${n.onset}`;
    }
    if (!Number.isInteger(n.duration) || n.duration < 1) {
      return `${where}.duration: must be at least 1: ${n.duration}`;
    }
    if (n.onset + n.duration > TOTAL_UNITS) {
      return `${where}.duration: note extends past the window end`;
    }
  }
  if (song.tempo_changes.length === 0) {
    return "tempo_changes: must contain at least one entry";
  }
  if (song.tempo_changes[0]![0] !== 0) {
    return "tempo_changes[0]: first entry must sit at unit 0";
  }
  let prevUnit = -1;
  for (let i = 0; i < song.tempo_changes.length; i++) {
    const [u, bpm] = song.tempo_changes[i]!;
    if (!Number.isInteger(u) || u < 0 || u >= TOTAL_UNITS) {
      return `tempo_changes[${i}]: unit out of range: ${u}`;
    }
    if (u <= prevUnit) {
      return `tempo_changes[${i}]: units must be strictly ascending`;
    }
    if (!(bpm > 0) || !Number.isFinite(bpm)) {
      return `tempo_changes[${i}]: BPM must be positive: ${bpm}`;
    }
    prevUnit = u;
  }
  return null;
}

export class EditorState {
  notes: EditorNote[] = [];
  tempoChanges: [number, number][] = [[0, 120]];
  repetitions = 1;
  /** Classes shown as lanes even when they hold no notes yet. */
  emptyClasses = new Set<number>();
  /** Currently selected instrument classes (for duplicate/remove). */
  selected = new Set<number>();

  private undoStack: EditorSnapshot[] = [];
  private static readonly MAX_UNDO = 200;

  private snapshot(): EditorSnapshot {
    return {
      notes: this.notes.map((n) => ({ ...n })),
      tempoChanges: this.tempoChanges.map(([u, b]) => [u, b] as [number, number]),
      repetitions: this.repetitions,
      emptyClasses: [...this.emptyClasses],
    };
  }

  private pushUndo(): void {
    this.undoStack.push(this.snapshot());
    if (this.undoStack.length > EditorState.MAX_UNDO) this.undoStack.shift();
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.notes = prev.notes;
    this.tempoChanges = prev.tempoChanges;
    this.repetitions = prev.repetitions;
    this.emptyClasses = new Set(prev.emptyClasses);
    this.selected = new Set([...this.selected].filter((c) => this.classes().includes(c)));
    return true;
  }

  /** Replace the editor contents with a generated song; clears history. */
  loadSong(song: NoteSongJson): void {
    this.notes = song.notes.map((n) => ({
      instrument: n.instrument,
      pitch: n.pitch,
      velocity: n.velocity,
      onset: n.onset,
      duration: n.duration,
    }));
    this.tempoChanges = song.tempo_changes.map(([u, b]) => [u, b] as [number, number]);
    this.emptyClasses.clear();
    this.selected.clear();
    this.undoStack = [];
  }

  /** Distinct instrument classes shown as lanes, ascending. */
  classes(): number[] {
    const present = new Set<number>(this.emptyClasses);
    for (const n of this.notes) present.add(n.instrument);
    return [...present].sort((a, b) => a - b);
  }

  isEmpty(): boolean {
    return this.notes.length === 0;
  }

  /** Remove every note of one instrument class and drop its lane. */
  removeInstrument(cls: number): void {
    this.pushUndo();
    this.notes = this.notes.filter((n) => n.instrument !== cls);
    this.emptyClasses.delete(cls);
    this.selected.delete(cls);
  }

  /**
   * Add an instrument class. When `fromCls` names an existing lane its
   * notes are duplicated onto the new class; otherwise the lane starts
   * empty. No-op if the class is already present.
   */
  addInstrument(newCls: number, fromCls?: number): void {
    if (this.classes().includes(newCls)) return;
    this.pushUndo();
    if (fromCls !== undefined && this.notes.some((n) => n.instrument === fromCls)) {
      const copies = this.notes
        .filter((n) => n.instrument === fromCls)
        .map((n) => ({ ...n, instrument: newCls }));
      this.notes.push(...copies);
    } else {
      this.emptyClasses.add(newCls);
    }
  }

  setRepetitions(n: number): void {
    const next = Math.max(1, Math.min(1024, Math.round(n)));
    if (next === this.repetitions) return;
    this.pushUndo();
    this.repetitions = next;
  }

  /**
   * Drag a note to a new grid cell. Onset and pitch snap to integers;
   * the note is kept inside the window, shortening it if the new onset
   * would push it past the end.
   */
  moveNote(index: number, onset: number, pitch: number): void {
    const n = this.notes[index];
    if (!n) return;
    const newOnset = Math.max(0, Math.min(TOTAL_UNITS - 1, Math.round(onset)));
    const newPitch = Math.max(0, Math.min(127, Math.round(pitch)));
    if (newOnset === n.onset && newPitch === n.pitch) return;
    this.pushUndo();
    const duration = Math.min(n.duration, TOTAL_UNITS - newOnset);
    this.notes[index] = { ...n, onset: newOnset, pitch: newPitch, duration };
  }

  /**
   * Start a drag on one note: snapshots once so the entire drag is a
   * single undo step. Follow with dragTo calls; no commit step needed.
   */
  beginDrag(index: number): boolean {
    if (index < 0 || index >= this.notes.length) return false;
    this.pushUndo();
    return true;
  }

  /** Move a note during a drag; snaps to grid, no undo entry. */
  dragTo(index: number, onset: number, pitch: number): void {
    const n = this.notes[index];
    if (!n) return;
    const newOnset = Math.max(0, Math.min(TOTAL_UNITS - 1, Math.round(onset)));
    const newPitch = Math.max(0, Math.min(127, Math.round(pitch)));
    const duration = Math.min(n.duration, TOTAL_UNITS - newOnset);
    this.notes[index] = { ...n, onset: newOnset, pitch: newPitch, duration };
  }

  addNote(note: EditorNote): void {
    this.pushUndo();
    this.notes.push({ ...note });
    this.emptyClasses.delete(note.instrument);
  }

  deleteNote(index: number): void {
    if (index < 0 || index >= this.notes.length) return;
    this.pushUndo();
    this.notes.splice(index, 1);
  }

  /** Canonical song JSON for the render endpoint and the piano roll. */
  toSongJson(): NoteSongJson {
    return {
      notes: canonicalizeNotes(clipLaneOverlaps(this.notes)),
      tempo_changes: this.tempoChanges.map(([u, b]) => [u, b] as [number, number]),
      bar_count: BAR_COUNT,
      time_signature: [4, 4],
    };
  }

  validate(): string | null {
    return validateSong(this.toSongJson());
  }
}
