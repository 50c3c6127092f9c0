/**
 * Piano roll: canvas drawing plus the pure coordinate math used for
 * drag-and-drop. Every instrument class keeps a fixed color so lanes
 * stay recognizable across samples and edits.
 */

import type { NoteSongJson } from "./types.js";
import { POSITIONS_PER_BAR, TOTAL_UNITS } from "./types.js";

/** Fixed, distinct color per instrument class (0..16). */
export const CLASS_COLORS: readonly string[] = [
  "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
  "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#5778a4", "#e49444",
  "#d1615d", "#85b6b2", "#6a9f58", "#e7ca60", "#967662",
];

export function classColor(cls: number): string {
  return CLASS_COLORS[((cls % CLASS_COLORS.length) + CLASS_COLORS.length) % CLASS_COLORS.length]!;
}

export interface RollLayout {
  width: number;
  height: number;
  pitchLo: number; // inclusive
  pitchHi: number; // inclusive
}

/** Pitch window with margin around the song's own range. */
export function pitchRange(song: NoteSongJson, margin = 3): { lo: number; hi: number } {
  if (song.notes.length === 0) return { lo: 48, hi: 72 };
  let lo = 127;
  let hi = 0;
  for (const n of song.notes) {
    if (n.pitch < lo) lo = n.pitch;
    if (n.pitch > hi) hi = n.pitch;
  }
  lo = Math.max(0, lo - margin);
  hi = Math.min(127, hi + margin);
  if (hi - lo < 12) {
    const pad = Math.ceil((12 - (hi - lo)) / 2);
    lo = Math.max(0, lo - pad);
    hi = Math.min(127, hi + pad);
  }
  return { lo, hi };
}

export function unitToX(layout: RollLayout, unit: number): number {
  return (unit / TOTAL_UNITS) * layout.width;
}

export function xToUnit(layout: RollLayout, x: number): number {
  const u = Math.floor((x / layout.width) * TOTAL_UNITS);
  return Math.max(0, Math.min(TOTAL_UNITS - 1, u));
}

export function pitchToY(layout: RollLayout, pitch: number): number {
  const rows = layout.pitchHi - layout.pitchLo + 1;
  const row = layout.pitchHi - pitch;
  return (row / rows) * layout.height;
}

export function rowHeight(layout: RollLayout): number {
  return layout.height / (layout.pitchHi - layout.pitchLo + 1);
}

export function yToPitch(layout: RollLayout, y: number): number {
  const rows = layout.pitchHi - layout.pitchLo + 1;
  const row = Math.floor((y / layout.height) * rows);
  const pitch = layout.pitchHi - Math.max(0, Math.min(rows - 1, row));
  return pitch;
}

/** Index of the topmost note under (x, y), or -1. */
export function noteIndexAt(layout: RollLayout, song: NoteSongJson, x: number, y: number): number {
  for (let i = song.notes.length - 1; i >= 0; i--) {
    const n = song.notes[i]!;
    const nx = unitToX(layout, n.onset);
    const nw = unitToX(layout, n.onset + n.duration) - nx;
    const ny = pitchToY(layout, n.pitch);
    const nh = rowHeight(layout);
    if (x >= nx && x <= nx + nw && y >= ny && y <= ny + nh) return i;
  }
  return -1;
}

export function drawRoll(
  ctx: CanvasRenderingContext2D,
  layout: RollLayout,
  song: NoteSongJson,
  opts: { cursorUnit?: number | null; highlightClass?: number | null } = {},
): void {
  const { width, height } = layout;
  ctx.clearRect(0, 0, width, height);

  // Row shading: mark octaves for orientation.
  const rh = rowHeight(layout);
  for (let p = layout.pitchLo; p <= layout.pitchHi; p++) {
    if (p % 12 === 0) {
      ctx.fillStyle = "rgba(127, 127, 127, 0.12)";
      ctx.fillRect(0, pitchToY(layout, p), width, rh);
    }
  }

  // Grid: beat lines light, bar lines strong.
  for (let u = 0; u <= TOTAL_UNITS; u += 12) {
    const x = unitToX(layout, u);
    const isBar = u % POSITIONS_PER_BAR === 0;
    ctx.strokeStyle = isBar ? "rgba(127,127,127,0.55)" : "rgba(127,127,127,0.2)";
    ctx.lineWidth = isBar ? 1.5 : 1;
    ctx.beginPath();
    ctx.moveTo(x, 0);
    ctx.lineTo(x, height);
    ctx.stroke();
  }

  // Notes, colored by instrument class, alpha by velocity.
  for (const n of song.notes) {
    const x = unitToX(layout, n.onset);
    const w = Math.max(2, unitToX(layout, n.onset + n.duration) - x - 1);
    const y = pitchToY(layout, n.pitch);
    const dim = opts.highlightClass != null && n.instrument !== opts.highlightClass;
    ctx.globalAlpha = (dim ? 0.25 : 0.55) + 0.45 * (n.velocity / 127) * (dim ? 0.4 : 1);
    ctx.fillStyle = classColor(n.instrument);
    ctx.fillRect(x, y + 0.5, w, Math.max(2, rh - 1));
  }
  ctx.globalAlpha = 1;

  // Playback cursor.
  if (opts.cursorUnit != null) {
    const x = unitToX(layout, opts.cursorUnit);
    ctx.strokeStyle = "#e4484d";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(x, 0);
    ctx.lineTo(x, height);
    ctx.stroke();
  }
}
