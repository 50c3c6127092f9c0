/**
 * Playback: converts grid units to seconds through the tempo map and
 * schedules notes on WebAudio. Each instrument class gets its own
 * timbre, gain follows velocity, and the tempo map restarts on every
 * repetition — matching what the rendered MIDI file does.
 */

import type { NoteSongJson } from "./types.js";
import { DRUM_CLASS, TOTAL_UNITS } from "./types.js";

/** Grid units per quarter-note beat (48 units per 4/4 bar). */
export const UNITS_PER_BEAT = 12;

export function secondsPerUnit(bpm: number): number {
  return 60 / bpm / UNITS_PER_BEAT;
}

/**
 * Start time in seconds of every grid unit for one pass of the window.
 * Index TOTAL_UNITS holds the full single-repetition duration.
 */
export function unitStartTimes(tempoChanges: readonly (readonly [number, number])[]): number[] {
  const times = new Array<number>(TOTAL_UNITS + 1);
  let bpm = 120;
  let nextChange = 0;
  let t = 0;
  for (let u = 0; u < TOTAL_UNITS; u++) {
    while (nextChange < tempoChanges.length && tempoChanges[nextChange]![0] === u) {
      bpm = tempoChanges[nextChange]![1];
      nextChange++;
    }
    times[u] = t;
    t += secondsPerUnit(bpm);
  }
  times[TOTAL_UNITS] = t;
  return times;
}

/** Total playback length. At 120 BPM one 4-bar pass is 8 seconds. */
export function computeDurationSeconds(
  tempoChanges: readonly (readonly [number, number])[],
  repetitions: number,
): number {
  return unitStartTimes(tempoChanges)[TOTAL_UNITS]! * repetitions;
}

/** Perceptual-ish gain curve; velocity 127 maps to full scale. */
export function velocityToGain(velocity: number): number {
  const v = Math.max(0, Math.min(127, velocity)) / 127;
  return v * v;
}

export type Timbre =
  | { kind: "osc"; type: OscillatorType; attack: number; release: number }
  | { kind: "noise"; release: number };

/** Per-class timbre so different lanes are audibly distinct. */
export function timbreForClass(cls: number): Timbre {
  if (cls === DRUM_CLASS) return { kind: "noise", release: 0.08 };
  const kinds: OscillatorType[] = ["sine", "triangle", "square", "sawtooth"];
  const type = kinds[cls % kinds.length]!;
  const soft = cls < 8;
  return { kind: "osc", type, attack: soft ? 0.01 : 0.003, release: 0.05 };
}

export function midiToHz(pitch: number): number {
  return 440 * Math.pow(2, (pitch - 69) / 12);
}

interface ScheduledNote {
  cls: number;
  pitch: number;
  gain: number;
  start: number;
  stop: number;
}

/**
 * Flatten a song into absolute-time events across all repetitions.
 * Pure, so the schedule itself is unit-testable without an AudioContext.
 */
export function scheduleEvents(song: NoteSongJson, repetitions: number): ScheduledNote[] {
  const times = unitStartTimes(song.tempo_changes);
  const repDuration = times[TOTAL_UNITS]!;
  const events: ScheduledNote[] = [];
  for (let rep = 0; rep < repetitions; rep++) {
    const base = rep * repDuration;
    for (const n of song.notes) {
      const start = base + times[n.onset]!;
      const endUnit = Math.min(TOTAL_UNITS, n.onset + n.duration);
      const stop = base + times[endUnit]!;
      events.push({
        cls: n.instrument,
        pitch: n.pitch,
        gain: velocityToGain(n.velocity),
        start,
        stop,
      });
    }
  }
  events.sort((a, b) => a.start - b.start);
  return events;
}

/** Map elapsed seconds back to a grid unit within the current pass. */
export function cursorUnitAt(
  tempoChanges: readonly (readonly [number, number])[],
  elapsed: number,
): number {
  const times = unitStartTimes(tempoChanges);
  const repDuration = times[TOTAL_UNITS]!;
  if (repDuration <= 0) return 0;
  // Epsilon absorbs float accumulation so exact unit boundaries map to
  // the unit that starts there, not the one before it.
  const local = (elapsed % repDuration) + 1e-9;
  let unit = 0;
  while (unit + 1 < TOTAL_UNITS && times[unit + 1]! <= local) unit++;
  return unit;
}

export class PlaybackEngine {
  private ctx: AudioContext | null = null;
  private master: GainNode | null = null;
  private raf = 0;
  private startedAt = 0;
  private totalSeconds = 0;
  private tempoChanges: [number, number][] = [[0, 120]];
  playing = false;

  constructor(
    private readonly onCursor: (unit: number, progress: number) => void,
    private readonly onStopped: () => void,
  ) {}

  private ensureContext(): AudioContext {
    if (!this.ctx) {
      this.ctx = new AudioContext();
    }
    return this.ctx;
  }

  private noiseBuffer(ctx: AudioContext): AudioBuffer {
    const buf = ctx.createBuffer(1, Math.ceil(ctx.sampleRate * 0.2), ctx.sampleRate);
    const data = buf.getChannelData(0);
    for (let i = 0; i < data.length; i++) data[i] = Math.random() * 2 - 1;
    return buf;
  }

  play(song: NoteSongJson, repetitions: number): void {
    this.stop();
    const ctx = this.ensureContext();
    void ctx.resume();
    this.master = ctx.createGain();
    this.master.gain.value = 0.3;
    this.master.connect(ctx.destination);
    const t0 = ctx.currentTime + 0.05;
    const noise = this.noiseBuffer(ctx);

    for (const ev of scheduleEvents(song, repetitions)) {
      const timbre = timbreForClass(ev.cls);
      const g = ctx.createGain();
      g.connect(this.master);
      const start = t0 + ev.start;
      const stop = t0 + ev.stop;
      if (timbre.kind === "noise") {
        const src = ctx.createBufferSource();
        src.buffer = noise;
        src.playbackRate.value = Math.pow(2, (ev.pitch - 60) / 24);
        g.gain.setValueAtTime(ev.gain, start);
        g.gain.exponentialRampToValueAtTime(1e-3, start + timbre.release);
        src.connect(g);
        src.start(start);
        src.stop(start + timbre.release + 0.05);
      } else {
        const osc = ctx.createOscillator();
        osc.type = timbre.type;
        osc.frequency.value = midiToHz(ev.pitch);
        g.gain.setValueAtTime(0, start);
        g.gain.linearRampToValueAtTime(ev.gain, start + timbre.attack);
        g.gain.setValueAtTime(ev.gain, Math.max(start + timbre.attack, stop));
        g.gain.linearRampToValueAtTime(0, stop + timbre.release);
        osc.connect(g);
        osc.start(start);
        osc.stop(stop + timbre.release + 0.02);
      }
    }

    this.tempoChanges = song.tempo_changes.map(([u, b]) => [u, b] as [number, number]);
    this.totalSeconds = computeDurationSeconds(song.tempo_changes, repetitions);
    this.startedAt = t0;
    this.playing = true;
    const tick = () => {
      if (!this.playing || !this.ctx) return;
      const elapsed = this.ctx.currentTime - this.startedAt;
      if (elapsed >= this.totalSeconds) {
        this.stop();
        return;
      }
      if (elapsed >= 0) {
        this.onCursor(
          cursorUnitAt(this.tempoChanges, elapsed),
          Math.max(0, elapsed / this.totalSeconds),
        );
      }
      this.raf = requestAnimationFrame(tick);
    };
    this.raf = requestAnimationFrame(tick);
  }

  /** Stop playback and reset the cursor to the start. */
  stop(): void {
    if (this.raf) cancelAnimationFrame(this.raf);
    this.raf = 0;
    if (this.master) {
      this.master.disconnect();
      this.master = null;
    }
    const wasPlaying = this.playing;
    this.playing = false;
    this.onCursor(0, 0);
    if (wasPlaying) this.onStopped();
  }
}
