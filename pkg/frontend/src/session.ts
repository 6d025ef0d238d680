/**
 * Studio session state: one active job steered through the review gates.
 *
 * The reducer is pure; the DOM layer feeds it pointer results and polled
 * job documents and renders whatever phase comes back. Phases mirror the
 * server state machine plus the local configure step.
 */

import { JobDocument } from "./api";
import { Box } from "./geometry";

export type Phase =
  | "configure"
  | "stage1_running"
  | "review_stage1"
  | "segmenting"
  | "mask_edit"
  | "stage2_running"
  | "compare"
  | "failed";

export interface SessionState {
  phase: Phase;
  jobId: string | null;
  job: JobDocument | null;
  box: Box | null;
  selectedReference: number;
  diffEnabled: boolean;
  banner: string | null;
}

export type SessionEvent =
  | { type: "box_drawn"; box: Box }
  | { type: "box_discarded" }
  | { type: "reference_picked"; index: number }
  | { type: "submitted"; jobId: string }
  | { type: "job_update"; job: JobDocument }
  | { type: "diff_toggled" }
  | { type: "reset" };

export function initialSession(): SessionState {
  return {
    phase: "configure",
    jobId: null,
    job: null,
    box: null,
    selectedReference: 0,
    diffEnabled: false,
    banner: null,
  };
}

export function phaseForJobState(state: string): Phase {
  switch (state) {
    case "created":
    case "stage1_running":
      return "stage1_running";
    case "stage1_done":
      return "review_stage1";
    case "segmenting":
      return "segmenting";
    case "mask_ready":
      return "mask_edit";
    case "stage2_running":
      return "stage2_running";
    case "done":
      return "compare";
    case "failed":
      return "failed";
    default:
      return "configure";
  }
}

export function reduce(state: SessionState, event: SessionEvent): SessionState {
  switch (event.type) {
    case "box_drawn":
      if (state.phase !== "configure") return state;
      return { ...state, box: event.box, banner: null };
    case "box_discarded":
      if (state.phase !== "configure") return state;
      return { ...state, banner: "box too small; drag at least 8x8 pixels" };
    case "reference_picked":
      if (state.phase !== "configure") return state;
      return { ...state, selectedReference: event.index };
    case "submitted":
      return { ...state, jobId: event.jobId, phase: "stage1_running", banner: null };
    case "job_update": {
      if (state.jobId !== event.job.id) return state;
      const phase = phaseForJobState(event.job.state);
      const banner =
        phase === "failed" && event.job.error
          ? `stage ${event.job.error.stage} failed: ${event.job.error.message}`
          : state.banner;
      return { ...state, job: event.job, phase, banner };
    }
    case "diff_toggled":
      if (state.phase !== "compare") return state;
      return { ...state, diffEnabled: !state.diffEnabled };
    case "reset":
      return initialSession();
    default:
      return state;
  }
}
