/**
 * Background-diff computation for the compare view.
 *
 * The pipeline guarantees the final composite equals the background
 * everywhere outside the foreground mask, so highlighting "any pixel
 * where the composite differs from the background" lights up exactly
 * the mask. The UI never recomputes compositing; this is a pure
 * comparison of two fetched artifacts.
 */

export function computeDiffMask(
  a: Uint8Array | Uint8ClampedArray,
  b: Uint8Array | Uint8ClampedArray,
  width: number,
  height: number,
  channels = 4,
): Uint8Array {
  const out = new Uint8Array(width * height);
  const compared = Math.min(channels, 3); // alpha is presentation, not content
  for (let p = 0; p < width * height; p++) {
    const base = p * channels;
    for (let c = 0; c < compared; c++) {
      if (a[base + c] !== b[base + c]) {
        out[p] = 1;
        break;
      }
    }
  }
  return out;
}

export function masksEqual(a: Uint8Array, b: Uint8Array): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if (a[i] !== b[i]) return false;
  }
  return true;
}

export function popcount(bits: Uint8Array): number {
  let n = 0;
  for (const b of bits) n += b;
  return n;
}
