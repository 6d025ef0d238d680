/**
 * Canvas <-> image coordinate mapping and the box-drawing drag logic.
 *
 * All geometry the server ever sees lives in image pixel space; the
 * viewport (zoom + pan) only affects how canvas events are mapped back.
 * Keeping this pure is what makes boxes round-trip the API without drift
 * at any zoom level.
 */

export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface Point {
  x: number;
  y: number;
}

export interface Viewport {
  zoom: number;
  panX: number;
  panY: number;
}

export const MIN_BOX_SIDE = 8;

export function canvasToImage(p: Point, view: Viewport): Point {
  return {
    x: Math.round((p.x - view.panX) / view.zoom),
    y: Math.round((p.y - view.panY) / view.zoom),
  };
}

export function imageToCanvas(p: Point, view: Viewport): Point {
  return { x: p.x * view.zoom + view.panX, y: p.y * view.zoom + view.panY };
}

export function clampPoint(p: Point, width: number, height: number): Point {
  return {
    x: Math.min(Math.max(p.x, 0), width),
    y: Math.min(Math.max(p.y, 0), height),
  };
}

/** Rectangle spanned by two image-space corners (half-open, like the API). */
export function normalizeDrag(a: Point, b: Point): Box {
  return {
    x: Math.min(a.x, b.x),
    y: Math.min(a.y, b.y),
    w: Math.abs(b.x - a.x),
    h: Math.abs(b.y - a.y),
  };
}

export function boxToString(box: Box): string {
  return `${box.x},${box.y},${box.w},${box.h}`;
}

export function boxFromList(values: number[]): Box {
  const [x, y, w, h] = values;
  return { x, y, w, h };
}

export function boxEquals(a: Box, b: Box): boolean {
  return a.x === b.x && a.y === b.y && a.w === b.w && a.h === b.h;
}

export function boxContains(box: Box, x: number, y: number): boolean {
  return x >= box.x && x < box.x + box.w && y >= box.y && y < box.y + box.h;
}

/** Box grown by a margin on all sides, trimmed to the frame. */
export function dilatedBox(box: Box, margin: number, width: number, height: number): Box {
  const x = Math.max(0, box.x - margin);
  const y = Math.max(0, box.y - margin);
  return {
    x,
    y,
    w: Math.min(width, box.x + box.w + margin) - x,
    h: Math.min(height, box.y + box.h + margin) - y,
  };
}

/**
 * Pointer-drag state machine for drawing the placement box.
 *
 * Inputs are canvas-space positions; the result is an image-space box,
 * clamped to the frame, or null when the drag is under the 8x8 minimum.
 */
export class BoxDraft {
  private start: Point | null = null;
  private end: Point | null = null;

  constructor(
    readonly imageWidth: number,
    readonly imageHeight: number,
    public view: Viewport,
  ) {}

  pointerDown(cx: number, cy: number): void {
    this.start = clampPoint(
      canvasToImage({ x: cx, y: cy }, this.view),
      this.imageWidth,
      this.imageHeight,
    );
    this.end = this.start;
  }

  pointerMove(cx: number, cy: number): void {
    if (this.start === null) return;
    this.end = clampPoint(
      canvasToImage({ x: cx, y: cy }, this.view),
      this.imageWidth,
      this.imageHeight,
    );
  }

  /** In-progress rectangle for the overlay, if any. */
  current(): Box | null {
    if (this.start === null || this.end === null) return null;
    return normalizeDrag(this.start, this.end);
  }

  pointerUp(cx: number, cy: number): Box | null {
    this.pointerMove(cx, cy);
    const box = this.current();
    this.start = this.end = null;
    if (box === null || box.w < MIN_BOX_SIDE || box.h < MIN_BOX_SIDE) return null;
    return box;
  }

  cancel(): void {
    this.start = this.end = null;
  }
}
