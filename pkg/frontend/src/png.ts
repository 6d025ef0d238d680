/**
 * PNG codec used by the test harness and node tooling (pngjs-based).
 *
 * In the browser the app decodes artifacts with createImageBitmap and
 * encodes mask uploads with canvas.toBlob; this module provides the same
 * operations for headless environments so the scripted round-trip can
 * compare real bytes and pixels.
 */

import { PNG } from "pngjs";

export interface DecodedImage {
  width: number;
  height: number;
  /** RGBA, row-major */
  rgba: Uint8Array;
}

export function decodePng(data: Uint8Array): DecodedImage {
  const png = PNG.sync.read(Buffer.from(data));
  return { width: png.width, height: png.height, rgba: new Uint8Array(png.data) };
}

/** Grayscale {0,255} encoding of a {0,1} mask buffer. */
export function encodeMaskPng(bits: Uint8Array, width: number, height: number): Uint8Array {
  const png = new PNG({ width, height });
  for (let p = 0; p < width * height; p++) {
    const v = bits[p] ? 255 : 0;
    png.data[p * 4] = v;
    png.data[p * 4 + 1] = v;
    png.data[p * 4 + 2] = v;
    png.data[p * 4 + 3] = 255;
  }
  return new Uint8Array(PNG.sync.write(png, { colorType: 0 }));
}

/** Luma >= 128 reads as 1, matching the server's mask decoding. */
export function decodeMaskPng(data: Uint8Array): { width: number; height: number; bits: Uint8Array } {
  const { width, height, rgba } = decodePng(data);
  const bits = new Uint8Array(width * height);
  for (let p = 0; p < width * height; p++) {
    const luma = 0.299 * rgba[p * 4] + 0.587 * rgba[p * 4 + 1] + 0.114 * rgba[p * 4 + 2];
    bits[p] = luma >= 128 ? 1 : 0;
  }
  return { width, height, bits };
}

/** RGBA encoding, for fabricating test inputs. */
export function encodeRgbaPng(rgba: Uint8Array, width: number, height: number): Uint8Array {
  const png = new PNG({ width, height });
  Buffer.from(rgba).copy(png.data);
  return new Uint8Array(PNG.sync.write(png));
}
