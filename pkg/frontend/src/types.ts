/** JSON shapes exchanged with the service. */

export interface NoteJson {
  track: number;
  instrument: number;
  pitch: number;
  velocity: number;
  onset: number;
  duration: number;
}

export interface NoteSongJson {
  notes: NoteJson[];
  tempo_changes: [number, number][];
  time_signature: [number, number];
  bar_count: number;
}

/** A chord as pitch-class root (0..11, C=0) plus quality name. */
export interface ChordRef {
  root: number;
  quality: string;
}

/** Metadata conditions; absent keys mean "model's choice". */
export interface Conditions {
  instruments?: number[];
  chords?: ChordRef[];
  mean_tempo?: number;
  mean_pitch?: number;
  mean_velocity?: number;
  mean_duration?: number;
}

export interface VocabInfo {
  event_count: number;
  vocab_size: number;
  sha256: string;
  tempo_centers: number[];
  duration_values: number[];
  velocity_centers: number[];
  events: { id: number; category: string; value: string }[];
  special: Record<string, number>;
}

export interface GenerateRequest {
  conditions: Conditions;
  num_samples: number;
  repetitions: number;
  temperature: number;
  top_k: number;
  mode: "top_k" | "greedy";
  seed?: number;
}

export interface SampleJson {
  midi_base64: string | null;
  notes: NoteSongJson | null;
  detected: Conditions | null;
  token_count: number;
  syntax_valid: boolean;
}

export interface GenerateResponse {
  seed: number;
  samples: SampleJson[];
  instrument_jaccard_mean: number | null;
}

export interface ModelInfo {
  config: Record<string, unknown>;
  vocab_sha256: string;
  n_params: number;
  max_seq_len: number;
  bpe: { vocab_size: number; n_merges: number } | null;
}

/** Grid constants shared with the service's note model. */
export const POSITIONS_PER_BAR = 48;
export const BAR_COUNT = 4;
export const TOTAL_UNITS = POSITIONS_PER_BAR * BAR_COUNT;
export const DRUM_CLASS = 16;

export const INSTRUMENT_NAMES: readonly string[] = [
  "Piano",
  "Chromatic Percussion",
  "Organ",
  "Guitar",
  "Bass",
  "Strings",
  "Ensemble",
  "Brass",
  "Reed",
  "Pipe",
  "Synth Lead",
  "Synth Pad",
  "Synth Effects",
  "Ethnic",
  "Percussive",
  "Sound Effects",
  "Drums",
];

/** Pitch-class names indexed by chord root integer. */
export const PITCH_CLASS_NAMES = [
  "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
] as const;

export function chordName(c: ChordRef): string {
  return `${PITCH_CLASS_NAMES[c.root] ?? c.root}:${c.quality}`;
}

export const CHORD_QUALITIES = [
  "maj", "min", "dim", "aug", "dom7", "maj7", "min7",
] as const;
