/** Job polling: 1 s cadence while any stage runs, per the service contract. */

import { JobDocument, StudioApi } from "./api";

export const POLL_INTERVAL_MS = 1000;

const SETTLED = new Set(["stage1_done", "mask_ready", "done", "failed"]);

export function isSettled(state: string): boolean {
  return SETTLED.has(state);
}

export async function pollUntil(
  api: StudioApi,
  jobId: string,
  predicate: (doc: JobDocument) => boolean,
  { intervalMs = POLL_INTERVAL_MS, timeoutMs = 60_000 } = {},
): Promise<JobDocument> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const doc = await api.getJob(jobId);
    if (predicate(doc)) return doc;
    if (Date.now() > deadline) {
      throw new Error(`timed out waiting on job ${jobId}; last state ${doc.state}`);
    }
    await sleep(intervalMs);
  }
}

export function watchJob(
  api: StudioApi,
  jobId: string,
  onUpdate: (doc: JobDocument) => void,
  intervalMs = POLL_INTERVAL_MS,
): () => void {
  let active = true;
  void (async () => {
    while (active) {
      try {
        const doc = await api.getJob(jobId);
        if (!active) return;
        onUpdate(doc);
        if (doc.state === "done" || doc.state === "failed") return;
      } catch {
        // transient; keep polling until stopped
      }
      await sleep(intervalMs);
    }
  })();
  return () => {
    active = false;
  };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
