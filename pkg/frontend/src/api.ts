/**
 * Typed client for the composition service API. Every image the studio
 * shows is fetched through here; the UI itself never generates pixels.
 */

import { Box, boxToString } from "./geometry";

export interface JobError {
  stage: string;
  code: string;
  message: string;
}

export interface JobDocument {
  id: string;
  state: string;
  mode: string;
  profile: string;
  seed: number;
  box: number[];
  selected_reference: number;
  artifacts: string[];
  error: JobError | null;
  stage1_approved: boolean;
  mask_approved: boolean;
  transitions: { ts: number; from: string | null; to: string; cause: string }[];
}

export type ReviewAction =
  | "approve_stage1"
  | "retry_stage1"
  | "approve_mask"
  | "retry_segmentation";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly field?: string,
  ) {
    super(message);
  }
}

async function raiseFor(resp: Response): Promise<never> {
  let field: string | undefined;
  let message = `${resp.status}`;
  try {
    const body = (await resp.json()) as { error?: { field?: string; message?: string } };
    field = body.error?.field;
    message = body.error?.message ?? message;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, message, field);
}

export interface SubmitOptions {
  background: Uint8Array;
  references: Uint8Array[];
  box: Box;
  mode: "auto" | "review";
  profile: string;
  seed?: number;
}

export class StudioApi {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async health(): Promise<boolean> {
    try {
      const resp = await fetch(this.url("/healthz"));
      return resp.ok;
    } catch {
      return false;
    }
  }

  async submitJob(opts: SubmitOptions): Promise<{ id: string; state: string }> {
    const form = new FormData();
    form.append("background", new Blob([toArrayBuffer(opts.background)], { type: "image/png" }), "background.png");
    for (let i = 0; i < opts.references.length; i++) {
      form.append(
        "references",
        new Blob([toArrayBuffer(opts.references[i])], { type: "image/png" }),
        `reference_${i}.png`,
      );
    }
    form.append("box", boxToString(opts.box));
    form.append("mode", opts.mode);
    form.append("profile", opts.profile);
    form.append("seed", String(opts.seed ?? 0));
    const resp = await fetch(this.url("/jobs"), { method: "POST", body: form });
    if (!resp.ok) await raiseFor(resp);
    return (await resp.json()) as { id: string; state: string };
  }

  async getJob(id: string): Promise<JobDocument> {
    const resp = await fetch(this.url(`/jobs/${id}`));
    if (!resp.ok) await raiseFor(resp);
    return (await resp.json()) as JobDocument;
  }

  artifactUrl(id: string, name: string): string {
    return this.url(`/jobs/${id}/artifacts/${name}`);
  }

  async fetchArtifact(id: string, name: string): Promise<Uint8Array> {
    const resp = await fetch(this.artifactUrl(id, name));
    if (!resp.ok) await raiseFor(resp);
    return new Uint8Array(await resp.arrayBuffer());
  }

  async postAction(
    id: string,
    action: ReviewAction,
    opts: { newSeed?: number; maskPng?: Uint8Array } = {},
  ): Promise<JobDocument> {
    const form = new FormData();
    form.append("action", action);
    if (opts.newSeed !== undefined) form.append("new_seed", String(opts.newSeed));
    if (opts.maskPng !== undefined) {
      form.append("mask", new Blob([toArrayBuffer(opts.maskPng)], { type: "image/png" }), "mask.png");
    }
    const resp = await fetch(this.url(`/jobs/${id}/actions`), { method: "POST", body: form });
    if (!resp.ok) await raiseFor(resp);
    return (await resp.json()) as JobDocument;
  }
}

function toArrayBuffer(view: Uint8Array): ArrayBuffer {
  return view.buffer.slice(view.byteOffset, view.byteOffset + view.byteLength) as ArrayBuffer;
}
