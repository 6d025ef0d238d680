/**
 * Studio shell: wires canvases, buttons, and the brush to the session
 * reducer and the service API. All pixels come from fetched artifacts;
 * the only client-side drawing is overlays (box, mask tint, diff) and
 * the local mask edit buffer.
 */

import { JobDocument, StudioApi } from "./api";
import { computeDiffMask } from "./diff";
import { Box, BoxDraft, Viewport, canvasToImage } from "./geometry";
import { MaskEditor } from "./maskEditor";
import { watchJob } from "./polling";
import { SessionEvent, SessionState, initialSession, reduce } from "./session";

const api = new StudioApi("");
let session: SessionState = initialSession();
let stopWatching: (() => void) | null = null;

const view: Viewport = { zoom: 4, panX: 0, panY: 0 };

interface Loaded {
  bytes: Uint8Array;
  bitmap: ImageBitmap;
  width: number;
  height: number;
}

let background: Loaded | null = null;
let references: Loaded[] = [];
let boxDraft: BoxDraft | null = null;
let editor: MaskEditor | null = null;
let brush: { kind: "add" | "remove"; radius: number; painting: boolean } = {
  kind: "remove",
  radius: 4,
  painting: false,
};
const artifactCache = new Map<string, Loaded>();

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

function dispatch(event: SessionEvent): void {
  session = reduce(session, event);
  render();
}

async function loadBytes(bytes: Uint8Array): Promise<Loaded> {
  const bitmap = await createImageBitmap(new Blob([bytes.slice().buffer as ArrayBuffer], { type: "image/png" }));
  return { bytes, bitmap, width: bitmap.width, height: bitmap.height };
}

async function artifact(name: string): Promise<Loaded> {
  const key = `${session.jobId}/${name}`;
  const cached = artifactCache.get(key);
  if (cached) return cached;
  const loaded = await loadBytes(await api.fetchArtifact(session.jobId!, name));
  artifactCache.set(key, loaded);
  return loaded;
}

function panel(title: string, width: number, height: number): CanvasRenderingContext2D {
  const wrap = document.createElement("div");
  wrap.className = "panel";
  const label = document.createElement("div");
  label.className = "panel-label";
  label.textContent = title;
  const scroller = document.createElement("div");
  scroller.className = "panel-scroll";
  const canvas = document.createElement("canvas");
  canvas.width = Math.round(width * view.zoom);
  canvas.height = Math.round(height * view.zoom);
  scroller.appendChild(canvas);
  wrap.append(label, scroller);
  $("panels").appendChild(wrap);
  scroller.addEventListener("scroll", () => {
    for (const other of document.querySelectorAll<HTMLDivElement>(".panel-scroll")) {
      if (other !== scroller) {
        other.scrollLeft = scroller.scrollLeft;
        other.scrollTop = scroller.scrollTop;
      }
    }
  });
  const ctx = canvas.getContext("2d")!;
  ctx.imageSmoothingEnabled = false;
  ctx.scale(view.zoom, view.zoom);
  return ctx;
}

function drawBoxOverlay(ctx: CanvasRenderingContext2D, box: Box): void {
  ctx.save();
  ctx.strokeStyle = "#ff3333";
  ctx.lineWidth = 2 / view.zoom;
  ctx.strokeRect(box.x, box.y, box.w, box.h);
  ctx.restore();
}

function drawMaskTint(ctx: CanvasRenderingContext2D, bits: Uint8Array, width: number, height: number, color: string): void {
  ctx.save();
  ctx.fillStyle = color;
  for (let y = 0; y < height; y++) {
    let runStart = -1;
    for (let x = 0; x <= width; x++) {
      const on = x < width && bits[y * width + x] === 1;
      if (on && runStart < 0) runStart = x;
      if (!on && runStart >= 0) {
        ctx.fillRect(runStart, y, x - runStart, 1);
        runStart = -1;
      }
    }
  }
  ctx.restore();
}

function setStatus(text: string): void {
  $("status").textContent = text;
}

function showControls(phase: string): void {
  for (const section of document.querySelectorAll<HTMLElement>("[data-phase]")) {
    section.hidden = section.dataset.phase !== phase;
  }
}

async function render(): Promise<void> {
  $("panels").replaceChildren();
  showControls(session.phase);
  $<HTMLDivElement>("banner").textContent = session.banner ?? "";

  switch (session.phase) {
    case "configure": {
      setStatus("load a background, draw the placement box, pick a reference");
      if (background) {
        const ctx = panel("background", background.width, background.height);
        ctx.drawImage(background.bitmap, 0, 0);
        const active = boxDraft?.current() ?? session.box;
        if (active) drawBoxOverlay(ctx, active);
        attachBoxHandlers(ctx.canvas);
      }
      renderReferenceStrip();
      $<HTMLButtonElement>("submit").disabled = !(background && references.length && session.box);
      break;
    }
    case "stage1_running":
    case "segmenting":
    case "stage2_running":
      setStatus(`${session.phase.replace("_", " ")}…`);
      break;
    case "review_stage1": {
      setStatus("review the stage-1 draft: approve, or retry with a new seed");
      const [bg, draft] = await Promise.all([artifact("i_bg"), artifact("i_os")]);
      const left = panel("background", bg.width, bg.height);
      left.drawImage(bg.bitmap, 0, 0);
      const right = panel("stage-1 draft", draft.width, draft.height);
      right.drawImage(draft.bitmap, 0, 0);
      if (session.job) {
        drawBoxOverlay(left, listToBox(session.job.box));
        drawBoxOverlay(right, listToBox(session.job.box));
      }
      break;
    }
    case "mask_edit": {
      setStatus("inspect the extracted mask; brush to fix it, then approve");
      const draft = await artifact("i_os");
      if (!editor && session.job) {
        const maskBytes = await api.fetchArtifact(session.jobId!, "m_osf");
        const decoded = await decodeMaskViaCanvas(maskBytes);
        editor = new MaskEditor(decoded, draft.width, draft.height, listToBox(session.job.box), 0);
      }
      const ctx = panel("draft + mask overlay", draft.width, draft.height);
      ctx.drawImage(draft.bitmap, 0, 0);
      if (editor) drawMaskTint(ctx, editor.snapshot(), draft.width, draft.height, "rgba(255,64,64,0.5)");
      if (session.job) drawBoxOverlay(ctx, listToBox(session.job.box));
      attachBrushHandlers(ctx.canvas);
      break;
    }
    case "compare": {
      setStatus("done: references | draft | final (toggle the background diff)");
      for (let i = 0; i < (session.job?.artifacts.filter((a) => a.startsWith("ref_")).length ?? 0); i++) {
        const ref = await artifact(`ref_${i}`);
        panel(`reference ${i}`, ref.width, ref.height).drawImage(ref.bitmap, 0, 0);
      }
      const draft = await artifact("i_os");
      panel("stage-1 draft", draft.width, draft.height).drawImage(draft.bitmap, 0, 0);
      const final = await artifact("i_ins");
      const ctx = panel("final composite", final.width, final.height);
      ctx.drawImage(final.bitmap, 0, 0);
      if (session.diffEnabled) {
        const bg = await artifact("i_bg");
        const diff = computeDiffMask(
          await rgbaViaCanvas(bg),
          await rgbaViaCanvas(final),
          final.width,
          final.height,
        );
        drawMaskTint(ctx, diff, final.width, final.height, "rgba(64,128,255,0.55)");
      }
      break;
    }
    case "failed":
      setStatus("job failed; see the banner (retry from the matching gate)");
      break;
  }
}

function listToBox(values: number[]): Box {
  const [x, y, w, h] = values;
  return { x, y, w, h };
}

function renderReferenceStrip(): void {
  const strip = $("references");
  strip.replaceChildren();
  references.forEach((ref, i) => {
    const cell = document.createElement("canvas");
    cell.width = 72;
    cell.height = 72;
    cell.className = i === session.selectedReference ? "ref selected" : "ref";
    const ctx = cell.getContext("2d")!;
    const scale = Math.min(72 / ref.width, 72 / ref.height);
    ctx.drawImage(ref.bitmap, 0, 0, ref.width * scale, ref.height * scale);
    cell.addEventListener("click", () => dispatch({ type: "reference_picked", index: i }));
    strip.appendChild(cell);
  });
}

function canvasPoint(canvas: HTMLCanvasElement, ev: MouseEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
}

function attachBoxHandlers(canvas: HTMLCanvasElement): void {
  if (!background) return;
  boxDraft ??= new BoxDraft(background.width, background.height, view);
  boxDraft.view = view;
  canvas.addEventListener("pointerdown", (ev) => {
    const p = canvasPoint(canvas, ev);
    boxDraft!.pointerDown(p.x, p.y);
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (ev.buttons) {
      const p = canvasPoint(canvas, ev);
      boxDraft!.pointerMove(p.x, p.y);
      void render();
    }
  });
  canvas.addEventListener("pointerup", (ev) => {
    const p = canvasPoint(canvas, ev);
    const box = boxDraft!.pointerUp(p.x, p.y);
    dispatch(box ? { type: "box_drawn", box } : { type: "box_discarded" });
  });
}

function attachBrushHandlers(canvas: HTMLCanvasElement): void {
  const stamp = (ev: MouseEvent) => {
    if (!editor) return;
    const p = canvasToImage(canvasPoint(canvas, ev), view);
    editor.applyStroke(brush.kind, p.x, p.y, brush.radius);
    void render();
  };
  canvas.addEventListener("pointerdown", (ev) => {
    brush.painting = true;
    canvas.setPointerCapture(ev.pointerId);
    stamp(ev);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (brush.painting) stamp(ev);
  });
  canvas.addEventListener("pointerup", () => {
    brush.painting = false;
  });
}

async function decodeMaskViaCanvas(bytes: Uint8Array): Promise<Uint8Array> {
  const bitmap = await createImageBitmap(new Blob([bytes.slice().buffer as ArrayBuffer], { type: "image/png" }));
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const data = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  const bits = new Uint8Array(bitmap.width * bitmap.height);
  for (let p = 0; p < bits.length; p++) bits[p] = data[p * 4] >= 128 ? 1 : 0;
  return bits;
}

async function rgbaViaCanvas(loaded: Loaded): Promise<Uint8ClampedArray> {
  const canvas = document.createElement("canvas");
  canvas.width = loaded.width;
  canvas.height = loaded.height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(loaded.bitmap, 0, 0);
  return ctx.getImageData(0, 0, loaded.width, loaded.height).data;
}

function encodeMaskViaCanvas(bits: Uint8Array, width: number, height: number): Promise<Uint8Array> {
  const canvas = document.createElement("canvas");
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d")!;
  const data = ctx.createImageData(width, height);
  for (let p = 0; p < bits.length; p++) {
    const v = bits[p] ? 255 : 0;
    data.data[p * 4] = v;
    data.data[p * 4 + 1] = v;
    data.data[p * 4 + 2] = v;
    data.data[p * 4 + 3] = 255;
  }
  ctx.putImageData(data, 0, 0);
  return new Promise((resolve, reject) => {
    canvas.toBlob(async (blob) => {
      if (!blob) return reject(new Error("mask encoding failed"));
      resolve(new Uint8Array(await blob.arrayBuffer()));
    }, "image/png");
  });
}

function startWatching(jobId: string): void {
  stopWatching?.();
  stopWatching = watchJob(api, jobId, (doc: JobDocument) => dispatch({ type: "job_update", job: doc }));
}

function wireControls(): void {
  $<HTMLInputElement>("bg-file").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    background = await loadBytes(new Uint8Array(await file.arrayBuffer()));
    boxDraft = new BoxDraft(background.width, background.height, view);
    void render();
  });
  $<HTMLInputElement>("ref-files").addEventListener("change", async (ev) => {
    const files = (ev.target as HTMLInputElement).files;
    if (!files) return;
    references = [];
    for (const file of files) {
      references.push(await loadBytes(new Uint8Array(await file.arrayBuffer())));
    }
    void render();
  });
  $<HTMLSelectElement>("zoom").addEventListener("change", (ev) => {
    view.zoom = Number((ev.target as HTMLSelectElement).value);
    void render();
  });
  $<HTMLButtonElement>("submit").addEventListener("click", async () => {
    if (!background || !references.length || !session.box) return;
    const result = await api.submitJob({
      background: background.bytes,
      references: references.map((r) => r.bytes),
      box: session.box,
      mode: "review",
      profile: $<HTMLInputElement>("profile").value || "mock-oracle",
      seed: Number($<HTMLInputElement>("seed").value || "0"),
    });
    dispatch({ type: "submitted", jobId: result.id });
    startWatching(result.id);
  });
  $<HTMLButtonElement>("approve-stage1").addEventListener("click", async () => {
    await api.postAction(session.jobId!, "approve_stage1");
    startWatching(session.jobId!);
  });
  $<HTMLButtonElement>("retry-stage1").addEventListener("click", async () => {
    const seed = Number($<HTMLInputElement>("retry-seed").value || "0");
    artifactCache.clear();
    await api.postAction(session.jobId!, "retry_stage1", { newSeed: seed });
    startWatching(session.jobId!);
  });
  $<HTMLInputElement>("brush-radius").addEventListener("input", (ev) => {
    brush.radius = Number((ev.target as HTMLInputElement).value);
    $("brush-radius-label").textContent = String(brush.radius);
  });
  $<HTMLSelectElement>("brush-kind").addEventListener("change", (ev) => {
    brush.kind = (ev.target as HTMLSelectElement).value as "add" | "remove";
  });
  $<HTMLButtonElement>("brush-undo").addEventListener("click", () => {
    editor?.undoLast();
    void render();
  });
  $<HTMLButtonElement>("approve-mask").addEventListener("click", async () => {
    if (!editor) return;
    const upload =
      editor.strokeCount() > 0
        ? { maskPng: await encodeMaskViaCanvas(editor.snapshot(), editor.width, editor.height) }
        : {};
    artifactCache.clear();
    await api.postAction(session.jobId!, "approve_mask", upload);
    editor = null;
    startWatching(session.jobId!);
  });
  $<HTMLButtonElement>("retry-segmentation").addEventListener("click", async () => {
    editor = null;
    artifactCache.clear();
    await api.postAction(session.jobId!, "retry_segmentation");
    startWatching(session.jobId!);
  });
  $<HTMLInputElement>("diff-toggle").addEventListener("change", () => dispatch({ type: "diff_toggled" }));
  $<HTMLButtonElement>("start-over").addEventListener("click", () => {
    stopWatching?.();
    editor = null;
    artifactCache.clear();
    dispatch({ type: "reset" });
  });
}

wireControls();
void render();
