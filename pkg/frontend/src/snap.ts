/**
 * Pure snapping helpers. Numeric sidebar inputs are snapped to the same
 * bin centers the model's vocabulary uses, so what the user sees is what
 * the request encodes. Tables come from /api/vocab at startup.
 */

/** Index of the nearest value in a sorted-or-not numeric table. */
export function nearestIndex(table: readonly number[], x: number): number {
  if (table.length === 0) throw new Error("empty table");
  let best = 0;
  let bestDist = Math.abs(table[0]! - x);
  for (let i = 1; i < table.length; i++) {
    const d = Math.abs(table[i]! - x);
    if (d < bestDist) {
      best = i;
      bestDist = d;
    }
  }
  return best;
}

export function snapToTable(table: readonly number[], x: number): number {
  return table[nearestIndex(table, x)]!;
}

/** Tempo snapping is done in log space, matching the log-spaced centers. */
export function snapTempo(centers: readonly number[], bpm: number): number {
  if (centers.length === 0) throw new Error("empty table");
  if (bpm <= 0) return centers[0]!;
  const lx = Math.log(bpm);
  let best = 0;
  let bestDist = Math.abs(Math.log(centers[0]!) - lx);
  for (let i = 1; i < centers.length; i++) {
    const d = Math.abs(Math.log(centers[i]!) - lx);
    if (d < bestDist) {
      best = i;
      bestDist = d;
    }
  }
  return centers[best]!;
}

export function clamp(x: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, x));
}

/** Snap a mean-pitch input to an integer MIDI pitch 0..127. */
export function snapPitch(x: number): number {
  return clamp(Math.round(x), 0, 127);
}
