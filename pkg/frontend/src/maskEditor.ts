/**
 * Local mask-editing buffer: brush strokes over the extracted silhouette.
 *
 * The buffer mirrors the server's m_osf artifact; add/remove strokes are
 * clipped to the margin-dilated placement box exactly as the server's
 * refinement would clip them, so an "apply" upload can never be rejected
 * for stray pixels. Each stroke is kept as a run-length delta, which
 * keeps the edit history tiny and makes single-stroke undo trivial.
 */

import { Box, boxContains, dilatedBox } from "./geometry";

export type RleRun = [start: number, length: number];

export interface StrokeDelta {
  kind: "add" | "remove";
  /** runs of pixel indices whose value this stroke flipped */
  runs: RleRun[];
}

export const MIN_BRUSH_RADIUS = 1;
export const MAX_BRUSH_RADIUS = 32;

/** Runs of consecutive 1s in a {0,1} buffer. */
export function rleEncode(bits: Uint8Array): RleRun[] {
  const runs: RleRun[] = [];
  let start = -1;
  for (let i = 0; i < bits.length; i++) {
    if (bits[i] === 1 && start < 0) start = i;
    if (bits[i] === 0 && start >= 0) {
      runs.push([start, i - start]);
      start = -1;
    }
  }
  if (start >= 0) runs.push([start, bits.length - start]);
  return runs;
}

export function rleDecode(runs: RleRun[], length: number): Uint8Array {
  const bits = new Uint8Array(length);
  for (const [start, count] of runs) bits.fill(1, start, start + count);
  return bits;
}

export class MaskEditor {
  private bits: Uint8Array;
  private readonly allowed: Box;
  private readonly deltas: StrokeDelta[] = [];

  constructor(
    bits: Uint8Array,
    readonly width: number,
    readonly height: number,
    box: Box,
    margin: number,
  ) {
    if (bits.length !== width * height) {
      throw new Error(`mask buffer is ${bits.length}, expected ${width * height}`);
    }
    this.bits = bits.slice();
    this.allowed = dilatedBox(box, margin, width, height);
  }

  get(x: number, y: number): number {
    return this.bits[y * this.width + x];
  }

  snapshot(): Uint8Array {
    return this.bits.slice();
  }

  popcount(): number {
    let n = 0;
    for (const b of this.bits) n += b;
    return n;
  }

  strokeCount(): number {
    return this.deltas.length;
  }

  /**
   * Stamp one brush disc. Returns the stroke's delta, or null when the
   * stroke lies entirely outside the allowed region (rejected, mirroring
   * the server-side clip).
   */
  applyStroke(kind: "add" | "remove", centerX: number, centerY: number, radius: number): StrokeDelta | null {
    const r = Math.min(Math.max(Math.round(radius), MIN_BRUSH_RADIUS), MAX_BRUSH_RADIUS);
    const target = kind === "add" ? 1 : 0;
    const flipped: number[] = [];
    let touchedAllowed = false;
    for (let dy = -r; dy <= r; dy++) {
      const y = centerY + dy;
      if (y < 0 || y >= this.height) continue;
      for (let dx = -r; dx <= r; dx++) {
        if (dx * dx + dy * dy > r * r) continue;
        const x = centerX + dx;
        if (x < 0 || x >= this.width) continue;
        if (!boxContains(this.allowed, x, y)) continue;
        touchedAllowed = true;
        const i = y * this.width + x;
        if (this.bits[i] !== target) {
          this.bits[i] = target;
          flipped.push(i);
        }
      }
    }
    if (!touchedAllowed) return null;
    const delta: StrokeDelta = { kind, runs: indicesToRuns(flipped) };
    this.deltas.push(delta);
    return delta;
  }

  /** Stamp the brush along a pointer path (indices in image space). */
  applyStrokePath(kind: "add" | "remove", path: { x: number; y: number }[], radius: number): StrokeDelta | null {
    const flipped: number[] = [];
    let touched = false;
    for (const p of path) {
      const delta = this.applyStroke(kind, p.x, p.y, radius);
      if (delta !== null) {
        touched = true;
        this.deltas.pop(); // merge the per-stamp deltas into one stroke
        for (const [start, count] of delta.runs) {
          for (let i = start; i < start + count; i++) flipped.push(i);
        }
      }
    }
    if (!touched) return null;
    const delta: StrokeDelta = { kind, runs: indicesToRuns(flipped) };
    this.deltas.push(delta);
    return delta;
  }

  undoLast(): boolean {
    const delta = this.deltas.pop();
    if (!delta) return false;
    const restore = delta.kind === "add" ? 0 : 1;
    for (const [start, count] of delta.runs) {
      this.bits.fill(restore, start, start + count);
    }
    return true;
  }

  /** Runs that differ from a reference buffer (the server's original mask). */
  changedRuns(original: Uint8Array): RleRun[] {
    const diff = new Uint8Array(this.bits.length);
    for (let i = 0; i < this.bits.length; i++) {
      diff[i] = this.bits[i] === original[i] ? 0 : 1;
    }
    return rleEncode(diff);
  }
}

function indicesToRuns(indices: number[]): RleRun[] {
  if (indices.length === 0) return [];
  indices.sort((a, b) => a - b);
  const runs: RleRun[] = [];
  let start = indices[0];
  let previous = indices[0];
  for (let k = 1; k < indices.length; k++) {
    const i = indices[k];
    if (i === previous) continue;
    if (i !== previous + 1) {
      runs.push([start, previous - start + 1]);
      start = i;
    }
    previous = i;
  }
  runs.push([start, previous - start + 1]);
  return runs;
}
