/**
 * Application wiring: sidebar (conditioning + sampling controls),
 * sample gallery, and the piano-roll editor with playback.
 */

import { ApiClient, ApiError, buildConditions } from "./api.js";
import { PlaybackEngine, computeDurationSeconds } from "./playback.js";
import {
  classColor,
  drawRoll,
  noteIndexAt,
  pitchRange,
  unitToX,
  xToUnit,
  yToPitch,
  type RollLayout,
} from "./pianoroll.js";
import { snapPitch, snapTempo, snapToTable } from "./snap.js";
import { EditorState } from "./state.js";
import {
  CHORD_QUALITIES,
  INSTRUMENT_NAMES,
  PITCH_CLASS_NAMES,
  chordName,
  type ChordRef,
  type Conditions,
  type GenerateResponse,
  type SampleJson,
  type VocabInfo,
} from "./types.js";

const api = new ApiClient("");
const editor = new EditorState();
let vocab: VocabInfo | null = null;
let generating = false;
let cursorUnit: number | null = null;
let lastRequested: Conditions = {};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(message: string, isError = false): void {
  const box = el<HTMLDivElement>("status");
  box.textContent = message;
  box.classList.toggle("error", isError);
}

// ---------------------------------------------------------------- sidebar

function buildInstrumentChecks(): void {
  const host = el<HTMLDivElement>("instruments");
  INSTRUMENT_NAMES.forEach((name, cls) => {
    const label = document.createElement("label");
    label.className = "check";
    const box = document.createElement("input");
    box.type = "checkbox";
    box.value = String(cls);
    box.dataset["cls"] = String(cls);
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = classColor(cls);
    label.append(box, swatch, document.createTextNode(name));
    host.appendChild(label);
  });
}

function buildChordSelect(): void {
  const select = el<HTMLSelectElement>("chords");
  for (let root = 0; root < PITCH_CLASS_NAMES.length; root++) {
    for (const quality of CHORD_QUALITIES) {
      const opt = document.createElement("option");
      opt.value = `${root}:${quality}`;
      opt.textContent = `${PITCH_CLASS_NAMES[root]}:${quality}`;
      select.appendChild(opt);
    }
  }
}

function selectedInstruments(): number[] {
  return [...el<HTMLDivElement>("instruments").querySelectorAll("input:checked")].map((n) =>
    Number((n as HTMLInputElement).value),
  );
}

function selectedChords(): ChordRef[] {
  const select = el<HTMLSelectElement>("chords");
  return [...select.selectedOptions].map((opt) => {
    const [root, quality] = opt.value.split(":");
    return { root: Number(root), quality: quality ?? "maj" };
  });
}

/** Blank numeric fields stay blank; filled ones snap to a bin center. */
function numericField(id: string): number | null {
  const input = el<HTMLInputElement>(id);
  if (input.value.trim() === "") return null;
  const x = Number(input.value);
  return Number.isFinite(x) ? x : null;
}

function applySnap(id: string, snap: (x: number) => number): void {
  const input = el<HTMLInputElement>(id);
  input.addEventListener("change", () => {
    const x = numericField(id);
    if (x == null) {
      input.value = "";
      return;
    }
    input.value = String(snap(x));
  });
}

function configureRanges(v: VocabInfo): void {
  const tempo = el<HTMLInputElement>("mean-tempo");
  tempo.min = String(Math.round(v.tempo_centers[0] ?? 16));
  tempo.max = String(Math.round(v.tempo_centers[v.tempo_centers.length - 1] ?? 256));
  tempo.placeholder = `${tempo.min}–${tempo.max}`;
  const vel = el<HTMLInputElement>("mean-velocity");
  vel.min = String(v.velocity_centers[0] ?? 1);
  vel.max = String(v.velocity_centers[v.velocity_centers.length - 1] ?? 127);
  vel.placeholder = `${vel.min}–${vel.max}`;
  const dur = el<HTMLInputElement>("mean-duration");
  dur.min = String(v.duration_values[0] ?? 1);
  dur.max = String(v.duration_values[v.duration_values.length - 1] ?? 192);
  dur.placeholder = `${dur.min}–${dur.max} units`;
  const pitch = el<HTMLInputElement>("mean-pitch");
  pitch.min = "0";
  pitch.max = "127";
  pitch.placeholder = "0–127";

  applySnap("mean-tempo", (x) => snapTempo(v.tempo_centers, x));
  applySnap("mean-velocity", (x) => snapToTable(v.velocity_centers, x));
  applySnap("mean-duration", (x) => snapToTable(v.duration_values, x));
  applySnap("mean-pitch", snapPitch);
}

function sidebarConditions(): Conditions {
  return buildConditions({
    instruments: selectedInstruments(),
    chords: selectedChords(),
    mean_tempo: numericField("mean-tempo"),
    mean_pitch: numericField("mean-pitch"),
    mean_velocity: numericField("mean-velocity"),
    mean_duration: numericField("mean-duration"),
  });
}

// ---------------------------------------------------------------- samples

function conditionsSummary(c: Conditions | null): string {
  if (!c || Object.keys(c).length === 0) return "(none)";
  const parts: string[] = [];
  if (c.instruments) {
    parts.push(`instruments: ${c.instruments.map((i) => INSTRUMENT_NAMES[i] ?? i).join(", ")}`);
  }
  if (c.chords) parts.push(`chords: ${c.chords.map(chordName).join(" ")}`);
  if (c.mean_tempo != null) parts.push(`tempo: ${c.mean_tempo.toFixed(1)} BPM`);
  if (c.mean_pitch != null) parts.push(`pitch: ${c.mean_pitch.toFixed(1)}`);
  if (c.mean_velocity != null) parts.push(`velocity: ${c.mean_velocity.toFixed(1)}`);
  if (c.mean_duration != null) parts.push(`duration: ${c.mean_duration.toFixed(1)} units`);
  return parts.join(" · ");
}

function base64ToBlob(b64: string, type: string): Blob {
  const bin = atob(b64);
  const bytes = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) bytes[i] = bin.charCodeAt(i);
  return new Blob([bytes], { type });
}

function saveBlob(blob: Blob, filename: string): void {
  const url = URL.createObjectURL(blob);
  const a = document.createElement("a");
  a.href = url;
  a.download = filename;
  a.click();
  setTimeout(() => URL.revokeObjectURL(url), 5_000);
}

function renderSampleCard(sample: SampleJson, index: number, seed: number): HTMLElement {
  const card = document.createElement("div");
  card.className = "sample-card";

  const header = document.createElement("div");
  header.className = "sample-header";
  const title = document.createElement("span");
  title.textContent = `Sample ${index + 1}`;
  const badge = document.createElement("span");
  badge.className = sample.syntax_valid ? "badge ok" : "badge bad";
  badge.textContent = sample.syntax_valid
    ? `${sample.token_count} tokens`
    : `invalid syntax · ${sample.token_count} tokens`;
  header.append(title, badge);
  card.appendChild(header);

  if (sample.notes) {
    const canvas = document.createElement("canvas");
    canvas.className = "sample-roll";
    canvas.width = 600;
    canvas.height = 160;
    const range = pitchRange(sample.notes);
    const layout: RollLayout = {
      width: canvas.width,
      height: canvas.height,
      pitchLo: range.lo,
      pitchHi: range.hi,
    };
    const ctx = canvas.getContext("2d");
    if (ctx) drawRoll(ctx, layout, sample.notes);
    card.appendChild(canvas);

    const meta = document.createElement("div");
    meta.className = "sample-meta";
    meta.innerHTML =
      `<div><b>Requested:</b> ${conditionsSummary(lastRequested)}</div>` +
      `<div><b>Detected:</b> ${conditionsSummary(sample.detected)}</div>`;
    card.appendChild(meta);

    const actions = document.createElement("div");
    actions.className = "sample-actions";
    const editBtn = document.createElement("button");
    editBtn.textContent = "Open in editor";
    editBtn.addEventListener("click", () => {
      if (!sample.notes) return;
      editor.loadSong(sample.notes);
      refreshEditor();
      el<HTMLElement>("editor").scrollIntoView({ behavior: "smooth" });
    });
    actions.appendChild(editBtn);
    if (sample.midi_base64) {
      const dlBtn = document.createElement("button");
      dlBtn.textContent = "Download MIDI";
      dlBtn.addEventListener("click", () => {
        saveBlob(
          base64ToBlob(sample.midi_base64!, "audio/midi"),
          `sample_${seed}_${index + 1}.mid`,
        );
      });
      actions.appendChild(dlBtn);
    }
    card.appendChild(actions);
  } else {
    const note = document.createElement("div");
    note.className = "sample-meta";
    note.textContent =
      "The sampler hit the length limit before completing a well-formed piece; no notes to show.";
    card.appendChild(note);
  }
  return card;
}

function showSamples(resp: GenerateResponse): void {
  const host = el<HTMLDivElement>("samples");
  host.replaceChildren();
  resp.samples.forEach((s, i) => host.appendChild(renderSampleCard(s, i, resp.seed)));
  const jack =
    resp.instrument_jaccard_mean == null
      ? ""
      : ` · instrument match ${(resp.instrument_jaccard_mean * 100).toFixed(0)}%`;
  setStatus(`Generated ${resp.samples.length} sample(s) with seed ${resp.seed}${jack}.`);
}

async function onGenerate(): Promise<void> {
  if (generating) return;
  generating = true;
  const btn = el<HTMLButtonElement>("generate");
  btn.disabled = true;
  setStatus("Generating…");
  try {
    lastRequested = sidebarConditions();
    const seedRaw = numericField("seed");
    const req = {
      conditions: lastRequested,
      num_samples: Math.round(numericField("num-samples") ?? 1),
      repetitions: Math.round(numericField("gen-repetitions") ?? 1),
      temperature: numericField("temperature") ?? 1.0,
      top_k: Math.round(numericField("top-k") ?? 5),
      mode: el<HTMLSelectElement>("mode").value === "greedy" ? ("greedy" as const) : ("top_k" as const),
      ...(seedRaw != null ? { seed: Math.round(seedRaw) } : {}),
    };
    showSamples(await api.generate(req));
  } catch (err) {
    if (err instanceof ApiError) {
      setStatus(`${err.category}: ${err.message}`, true);
    } else {
      setStatus(String(err), true);
    }
  } finally {
    generating = false;
    btn.disabled = false;
  }
}

// ---------------------------------------------------------------- editor

const playback = new PlaybackEngine(
  (unit) => {
    cursorUnit = unit;
    drawEditorRoll();
  },
  () => {
    cursorUnit = null;
    updateEditorControls();
    drawEditorRoll();
  },
);

function editorLayout(canvas: HTMLCanvasElement): RollLayout {
  const song = editor.toSongJson();
  const range = pitchRange(song);
  return { width: canvas.width, height: canvas.height, pitchLo: range.lo, pitchHi: range.hi };
}

function drawEditorRoll(): void {
  const canvas = el<HTMLCanvasElement>("roll");
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const layout = editorLayout(canvas);
  const song = editor.toSongJson();
  const highlight = editor.selected.size === 1 ? [...editor.selected][0]! : null;
  drawRoll(ctx, layout, song, { cursorUnit, highlightClass: highlight });
}

function refreshTrackChips(): void {
  const host = el<HTMLDivElement>("track-chips");
  host.replaceChildren();
  const counts = new Map<number, number>();
  for (const n of editor.notes) counts.set(n.instrument, (counts.get(n.instrument) ?? 0) + 1);
  for (const cls of editor.classes()) {
    const chip = document.createElement("span");
    chip.className = "chip" + (editor.selected.has(cls) ? " selected" : "");
    const dot = document.createElement("span");
    dot.className = "swatch";
    dot.style.background = classColor(cls);
    const label = document.createElement("span");
    label.textContent = `${INSTRUMENT_NAMES[cls] ?? cls} (${counts.get(cls) ?? 0})`;
    const close = document.createElement("button");
    close.className = "chip-close";
    close.title = "Remove this instrument";
    close.textContent = "×";
    close.addEventListener("click", (ev) => {
      ev.stopPropagation();
      editor.removeInstrument(cls);
      refreshEditor();
    });
    chip.append(dot, label, close);
    chip.addEventListener("click", () => {
      if (editor.selected.has(cls)) editor.selected.delete(cls);
      else editor.selected.add(cls);
      refreshEditor();
    });
    host.appendChild(chip);
  }
  if (editor.classes().length === 0) {
    const empty = document.createElement("span");
    empty.className = "hint";
    empty.textContent = "No tracks — generate a sample or add an instrument.";
    host.appendChild(empty);
  }
}

function refreshAddInstrumentOptions(): void {
  const select = el<HTMLSelectElement>("add-instrument");
  const present = new Set(editor.classes());
  select.replaceChildren();
  INSTRUMENT_NAMES.forEach((name, cls) => {
    if (present.has(cls)) return;
    const opt = document.createElement("option");
    opt.value = String(cls);
    opt.textContent = name;
    select.appendChild(opt);
  });
  select.disabled = select.options.length === 0;
  el<HTMLButtonElement>("add-instrument-btn").disabled = select.options.length === 0;
}

function updateEditorControls(): void {
  const reps = el<HTMLInputElement>("playtime");
  if (document.activeElement !== reps) reps.value = String(editor.repetitions);
  const seconds = computeDurationSeconds(editor.tempoChanges, editor.repetitions);
  el<HTMLSpanElement>("duration-label").textContent = editor.isEmpty()
    ? ""
    : `${seconds.toFixed(1)} s`;
  el<HTMLButtonElement>("play").disabled = editor.isEmpty() || playback.playing;
  el<HTMLButtonElement>("stop").disabled = !playback.playing;
  el<HTMLButtonElement>("undo").disabled = !editor.canUndo;
  el<HTMLButtonElement>("download").disabled = editor.isEmpty();
  const problem = editor.validate();
  const msg = el<HTMLDivElement>("validation-msg");
  msg.textContent = problem ?? "";
  msg.classList.toggle("error", problem != null);
}

function refreshEditor(): void {
  refreshTrackChips();
  refreshAddInstrumentOptions();
  updateEditorControls();
  drawEditorRoll();
}

interface DragState {
  index: number;
  grabUnits: number;
}

let drag: DragState | null = null;

function canvasPoint(canvas: HTMLCanvasElement, ev: PointerEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * canvas.width,
    y: ((ev.clientY - rect.top) / rect.height) * canvas.height,
  };
}

function wireCanvasDrag(): void {
  const canvas = el<HTMLCanvasElement>("roll");
  canvas.addEventListener("pointerdown", (ev) => {
    const { x, y } = canvasPoint(canvas, ev);
    const layout = editorLayout(canvas);
    const song = editor.toSongJson();
    const hit = noteIndexAt(layout, song, x, y);
    if (hit < 0) return;
    // The roll draws the canonical song; find the same note in the
    // editable list so the drag mutates the right entry.
    const target = song.notes[hit]!;
    const index = editor.notes.findIndex(
      (n) =>
        n.instrument === target.instrument &&
        n.pitch === target.pitch &&
        n.onset === target.onset &&
        n.velocity === target.velocity,
    );
    if (index < 0 || !editor.beginDrag(index)) return;
    const noteX = unitToX(layout, editor.notes[index]!.onset);
    drag = { index, grabUnits: xToUnit(layout, x) - xToUnit(layout, noteX) };
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!drag) return;
    const { x, y } = canvasPoint(canvas, ev);
    const layout = editorLayout(canvas);
    editor.dragTo(drag.index, xToUnit(layout, x) - drag.grabUnits, yToPitch(layout, y));
    drawEditorRoll();
  });
  const finish = (ev: PointerEvent) => {
    if (!drag) return;
    drag = null;
    canvas.releasePointerCapture(ev.pointerId);
    refreshEditor();
  };
  canvas.addEventListener("pointerup", finish);
  canvas.addEventListener("pointercancel", finish);
}

async function onDownloadEdited(): Promise<void> {
  const problem = editor.validate();
  if (problem) {
    setStatus(`Cannot render: ${problem}`, true);
    return;
  }
  try {
    const blob = await api.render(editor.toSongJson(), editor.repetitions);
    saveBlob(blob, "edited.mid");
    setStatus("Rendered MIDI downloaded.");
  } catch (err) {
    if (err instanceof ApiError) setStatus(`${err.category}: ${err.message}`, true);
    else setStatus(String(err), true);
  }
}

function wireEditorControls(): void {
  el<HTMLInputElement>("playtime").addEventListener("change", (ev) => {
    const input = ev.target as HTMLInputElement;
    const n = Number(input.value);
    if (Number.isFinite(n)) editor.setRepetitions(n);
    refreshEditor();
  });
  el<HTMLButtonElement>("add-instrument-btn").addEventListener("click", () => {
    const select = el<HTMLSelectElement>("add-instrument");
    if (select.value === "") return;
    const cls = Number(select.value);
    const from = editor.selected.size === 1 ? [...editor.selected][0] : undefined;
    editor.addInstrument(cls, from);
    refreshEditor();
  });
  el<HTMLButtonElement>("undo").addEventListener("click", () => {
    editor.undo();
    refreshEditor();
  });
  el<HTMLButtonElement>("play").addEventListener("click", () => {
    if (editor.isEmpty()) return;
    playback.play(editor.toSongJson(), editor.repetitions);
    updateEditorControls();
  });
  el<HTMLButtonElement>("stop").addEventListener("click", () => {
    playback.stop();
  });
  el<HTMLButtonElement>("download").addEventListener("click", () => {
    void onDownloadEdited();
  });
}

// ------------------------------------------------------------------ init

async function init(): Promise<void> {
  buildInstrumentChecks();
  buildChordSelect();
  wireCanvasDrag();
  wireEditorControls();
  el<HTMLButtonElement>("generate").addEventListener("click", () => void onGenerate());
  refreshEditor();
  try {
    vocab = await api.vocab();
    configureRanges(vocab);
    const health = await api.health();
    setStatus(
      health.ready
        ? "Ready. Set any conditions you like (or none) and generate."
        : "Service is up but no model is loaded; generation will fail.",
      !health.ready,
    );
  } catch (err) {
    setStatus(`Cannot reach the service: ${String(err)}`, true);
  }
}

void init();
