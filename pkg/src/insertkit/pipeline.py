"""Two-stage orchestration: a resumable, reviewable job state machine.

A job walks Created -> Stage1Running -> Stage1Done -> Segmenting ->
MaskReady -> Stage2Running -> Done; any running state may drop to Failed,
a failed job may re-enter exactly the stage it failed in, and review-mode
jobs hold at Stage1Done and MaskReady until an approve or retry action.
Every artifact is persisted through an atomic write-temp-then-rename
store, one directory per job, with an append-only event log recording
each transition.

The final composite is assembled here with an enforced background select:
whatever the stage-2 backend returns, pixels outside the foreground mask
are copied from the original background, so background preservation holds
unconditionally.

Each stage is split into ``begin_*`` (the contested state transition,
cheap, safe to call in a request handler) and ``execute_*`` (the actual
computation, safe to run on a worker); ``run_*`` does both. Per-job
locking serializes writers, so of two concurrent actions exactly one
wins and the other sees an illegal-transition error.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .backends import BackendProfile, SidecarAlpha, build_backends
from .errors import (
    BackendUnavailableError,
    EmptyMaskError,
    EmptyReferenceError,
    IllegalTransitionError,
    InvalidArgumentError,
    MissingOracleError,
    UnknownJobError,
)
from .imaging import BinaryMask, PlacementBox, RasterImage, dilate, load_image_png, load_mask_png
from .masking import composite_preserving_background, erase, rasterize_box, refine_mask

__all__ = [
    "JobState",
    "JobError",
    "CompositionJob",
    "ArtifactStore",
    "Pipeline",
]


class JobState(str, Enum):
    CREATED = "created"
    STAGE1_RUNNING = "stage1_running"
    STAGE1_DONE = "stage1_done"
    SEGMENTING = "segmenting"
    MASK_READY = "mask_ready"
    STAGE2_RUNNING = "stage2_running"
    DONE = "done"
    FAILED = "failed"


# Stage names carried in failure records; a failed job may only re-enter
# the stage it failed in.
STAGE1 = "stage1"
SEGMENTATION = "segmentation"
STAGE2 = "stage2"

_RETRY_ENTRY = {
    STAGE1: JobState.STAGE1_RUNNING,
    SEGMENTATION: JobState.SEGMENTING,
    STAGE2: JobState.STAGE2_RUNNING,
}

_LEGAL = {
    (JobState.CREATED, JobState.STAGE1_RUNNING),
    (JobState.STAGE1_RUNNING, JobState.STAGE1_DONE),
    (JobState.STAGE1_RUNNING, JobState.FAILED),
    (JobState.STAGE1_DONE, JobState.STAGE1_RUNNING),
    (JobState.STAGE1_DONE, JobState.SEGMENTING),
    (JobState.SEGMENTING, JobState.MASK_READY),
    (JobState.SEGMENTING, JobState.FAILED),
    (JobState.MASK_READY, JobState.SEGMENTING),
    (JobState.MASK_READY, JobState.STAGE2_RUNNING),
    (JobState.STAGE2_RUNNING, JobState.DONE),
    (JobState.STAGE2_RUNNING, JobState.FAILED),
}


@dataclass
class JobError:
    stage: str
    code: str
    message: str

    def to_dict(self) -> dict:
        return {"stage": self.stage, "code": self.code, "message": self.message}

    @classmethod
    def from_dict(cls, data: dict) -> "JobError":
        return cls(stage=data["stage"], code=data["code"], message=data["message"])


@dataclass
class CompositionJob:
    """One composition run: inputs, stage artifacts, and review decisions."""

    id: str
    box: PlacementBox
    mode: str
    profile: BackendProfile
    seed: int
    state: JobState = JobState.CREATED
    background_ref: str = "i_bg"
    reference_refs: list[str] = field(default_factory=list)
    selected_reference: int = 0
    artifacts: dict[str, str] = field(default_factory=dict)
    error: JobError | None = None
    stage1_approved: bool = False
    mask_approved: bool = False
    transitions: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "box": self.box.as_list(),
            "mode": self.mode,
            "profile": self.profile.to_dict(),
            "seed": self.seed,
            "state": self.state.value,
            "background_ref": self.background_ref,
            "reference_refs": list(self.reference_refs),
            "selected_reference": self.selected_reference,
            "artifacts": dict(self.artifacts),
            "error": self.error.to_dict() if self.error else None,
            "stage1_approved": self.stage1_approved,
            "mask_approved": self.mask_approved,
            "transitions": list(self.transitions),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CompositionJob":
        return cls(
            id=data["id"],
            box=PlacementBox(*data["box"]),
            mode=data["mode"],
            profile=BackendProfile.from_dict(data["profile"]),
            seed=data["seed"],
            state=JobState(data["state"]),
            background_ref=data["background_ref"],
            reference_refs=list(data["reference_refs"]),
            selected_reference=data["selected_reference"],
            artifacts=dict(data["artifacts"]),
            error=JobError.from_dict(data["error"]) if data.get("error") else None,
            stage1_approved=data["stage1_approved"],
            mask_approved=data["mask_approved"],
            transitions=list(data["transitions"]),
        )


class ArtifactStore:
    """One directory per job; atomic writes (write temp, then rename).

    Job inputs are written exactly once; stage outputs are owned by their
    stage and may be overwritten only by a retry of that same stage.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def job_dir(self, job_id: str) -> Path:
        return self.root / job_id

    def _write_atomic(self, path: Path, data: bytes) -> None:
        tmp = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)

    def put_bytes(self, job_id: str, name: str, data: bytes, replace: bool = False) -> str:
        filename = f"{name}.png"
        path = self.job_dir(job_id) / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.exists() and not replace:
            raise InvalidArgumentError(f"artifact {name} already committed for job {job_id}")
        self._write_atomic(path, data)
        return filename

    def put_image(self, job_id: str, name: str, image: RasterImage, replace: bool = False) -> str:
        return self.put_bytes(job_id, name, image.to_png_bytes(), replace=replace)

    def put_mask(self, job_id: str, name: str, mask: BinaryMask, replace: bool = False) -> str:
        return self.put_bytes(job_id, name, mask.to_png_bytes(), replace=replace)

    def has(self, job_id: str, name: str) -> bool:
        return (self.job_dir(job_id) / f"{name}.png").exists()

    def get_bytes(self, job_id: str, name: str) -> bytes:
        path = self.job_dir(job_id) / f"{name}.png"
        if not path.exists():
            raise FileNotFoundError(f"artifact {name} not committed for job {job_id}")
        return path.read_bytes()

    def get_image(self, job_id: str, name: str) -> RasterImage:
        return load_image_png(self.get_bytes(job_id, name))

    def get_mask(self, job_id: str, name: str) -> BinaryMask:
        return load_mask_png(self.get_bytes(job_id, name))

    def delete(self, job_id: str, name: str) -> None:
        path = self.job_dir(job_id) / f"{name}.png"
        if path.exists():
            path.unlink()

    def append_event(self, job_id: str, record: dict) -> None:
        path = self.job_dir(job_id) / "events.log"
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def read_events(self, job_id: str) -> list[dict]:
        path = self.job_dir(job_id) / "events.log"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]

    def save_job(self, job: CompositionJob) -> None:
        path = self.job_dir(job.id) / "job.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        self._write_atomic(path, json.dumps(job.to_dict(), indent=2, sort_keys=True).encode())

    def load_job(self, job_id: str) -> CompositionJob:
        path = self.job_dir(job_id) / "job.json"
        if not path.exists():
            raise UnknownJobError(f"no job with id {job_id!r}")
        return CompositionJob.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def list_job_ids(self) -> list[str]:
        return sorted(p.parent.name for p in self.root.glob("*/job.json"))


class Pipeline:
    """Runs jobs against the store; one writer per job at a time."""

    def __init__(self, store: ArtifactStore | str | Path):
        self.store = store if isinstance(store, ArtifactStore) else ArtifactStore(store)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, job_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(job_id, threading.Lock())

    # -- job lifecycle -----------------------------------------------------

    def create_job(
        self,
        background: RasterImage,
        references: list[RasterImage],
        box: PlacementBox,
        profile: BackendProfile,
        mode: str = "auto",
        seed: int = 0,
        selected_reference: int = 0,
        job_id: str | None = None,
    ) -> CompositionJob:
        if mode not in ("auto", "review"):
            raise InvalidArgumentError(f"mode must be 'auto' or 'review', got {mode!r}")
        if not references:
            raise InvalidArgumentError("at least one reference image is required")
        if not 0 <= selected_reference < len(references):
            raise InvalidArgumentError(
                f"selected_reference {selected_reference} out of range for {len(references)} references"
            )
        box.validate_within(background.width, background.height)

        job_id = job_id or uuid.uuid4().hex[:12]
        job = CompositionJob(
            id=job_id, box=box, mode=mode, profile=profile, seed=seed,
            selected_reference=selected_reference,
        )
        self.store.put_image(job_id, "i_bg", background)
        job.artifacts["i_bg"] = "i_bg.png"
        for i, ref in enumerate(references):
            name = f"ref_{i}"
            self.store.put_image(job_id, name, ref)
            job.artifacts[name] = f"{name}.png"
            job.reference_refs.append(name)
        self._record(job, None, JobState.CREATED, "create_job")
        self.store.save_job(job)
        return job

    def get_job(self, job_id: str) -> CompositionJob:
        return self.store.load_job(job_id)

    # -- state machine plumbing --------------------------------------------

    def _record(self, job: CompositionJob, src: JobState | None, dst: JobState, cause: str) -> None:
        record = {
            "ts": time.time(),
            "from": src.value if src else None,
            "to": dst.value,
            "cause": cause,
        }
        job.state = dst
        job.transitions.append(record)
        self.store.append_event(job.id, record)

    def _transition(self, job: CompositionJob, dst: JobState, cause: str) -> None:
        src = job.state
        if (src, dst) not in _LEGAL:
            raise IllegalTransitionError(
                f"job {job.id}: cannot move {src.value} -> {dst.value}", state=src.value
            )
        self._record(job, src, dst, cause)
        self.store.save_job(job)

    def _enter_retry(self, job: CompositionJob, stage: str, cause: str) -> None:
        """Failed -> re-enter the stage recorded in the failure."""
        if job.error is None or job.error.stage != stage:
            raise IllegalTransitionError(
                f"job {job.id}: failed in stage "
                f"{job.error.stage if job.error else '?'}, cannot retry {stage}",
                state=job.state.value,
            )
        job.error = None
        self._record(job, JobState.FAILED, _RETRY_ENTRY[stage], cause)
        self.store.save_job(job)

    def _fail(self, job: CompositionJob, stage: str, code: str, message: str) -> None:
        job.error = JobError(stage=stage, code=code, message=message)
        self._record(job, job.state, JobState.FAILED, f"{code}: {message}")
        self.store.save_job(job)

    def _note(self, job: CompositionJob, cause: str) -> None:
        """Event that does not change state (approvals)."""
        self.store.append_event(
            job.id,
            {"ts": time.time(), "from": job.state.value, "to": job.state.value, "cause": cause},
        )

    # -- stage 1 -------------------------------------------------------------

    def begin_stage1(
        self,
        job_id: str,
        cause: str = "run_stage1",
        new_seed: int | None = None,
        allow_rerun: bool = False,
    ) -> CompositionJob:
        with self._lock(job_id):
            job = self.store.load_job(job_id)
            if new_seed is not None:
                job.seed = new_seed
            if job.state is JobState.FAILED:
                self._enter_retry(job, STAGE1, cause)
            else:
                if job.state is JobState.STAGE1_DONE and not allow_rerun:
                    raise IllegalTransitionError(
                        f"job {job_id}: stage 1 already ran; use retry_stage1",
                        state=job.state.value,
                    )
                self._transition(job, JobState.STAGE1_RUNNING, cause)
            job.stage1_approved = False
            job.mask_approved = False
            self.store.save_job(job)
            return job

    def execute_stage1(self, job_id: str) -> CompositionJob:
        with self._lock(job_id):
            job = self.store.load_job(job_id)
            if job.state is not JobState.STAGE1_RUNNING:
                raise IllegalTransitionError(
                    f"job {job_id}: stage 1 is not running", state=job.state.value
                )
            bg = self.store.get_image(job.id, "i_bg")
            ref = self.store.get_image(job.id, job.reference_refs[job.selected_reference])
            box_mask = rasterize_box(job.box, bg.width, bg.height)
            masked_bg = erase(bg, box_mask)
            job.artifacts["m_bbx"] = self.store.put_mask(job.id, "m_bbx", box_mask, replace=True)
            job.artifacts["i_mbg"] = self.store.put_image(job.id, "i_mbg", masked_bg, replace=True)

            compositor, _, _ = build_backends(job.profile)
            try:
                result = compositor.compose(masked_bg, box_mask, ref, seed=job.seed)
            except (BackendUnavailableError, EmptyReferenceError) as exc:
                code = (
                    "backend_unavailable"
                    if isinstance(exc, BackendUnavailableError)
                    else "empty_reference"
                )
                self._fail(job, STAGE1, code, str(exc))
                return job

            job.artifacts["i_os"] = self.store.put_image(job.id, "i_os", result.image, replace=True)
            if result.sidecar is not None:
                job.artifacts["sidecar_alpha"] = self.store.put_mask(
                    job.id, "sidecar_alpha", result.sidecar.mask, replace=True
                )
            if job.mode == "auto":
                job.stage1_approved = True
            self._transition(job, JobState.STAGE1_DONE, "stage1 complete")
            return job

    def run_stage1(self, job_id: str) -> CompositionJob:
        self.begin_stage1(job_id)
        return self.execute_stage1(job_id)

    def retry_stage1(self, job_id: str, new_seed: int | None = None) -> CompositionJob:
        self.begin_stage1(job_id, cause="retry_stage1", new_seed=new_seed, allow_rerun=True)
        return self.execute_stage1(job_id)

    def approve_stage1(self, job_id: str) -> CompositionJob:
        with self._lock(job_id):
            job = self.store.load_job(job_id)
            if job.state is not JobState.STAGE1_DONE:
                raise IllegalTransitionError(
                    f"job {job_id}: approve_stage1 requires stage1_done, is {job.state.value}",
                    state=job.state.value,
                )
            job.stage1_approved = True
            self._note(job, "approve_stage1")
            self.store.save_job(job)
            return job

    # -- segmentation ----------------------------------------------------------

    def begin_segmentation(
        self,
        job_id: str,
        cause: str = "run_segmentation",
        new_seed: int | None = None,
        allow_rerun: bool = False,
    ) -> CompositionJob:
        with self._lock(job_id):
            job = self.store.load_job(job_id)
            if new_seed is not None:
                job.seed = new_seed
            if job.state is JobState.FAILED:
                self._enter_retry(job, SEGMENTATION, cause)
            else:
                if job.state is JobState.STAGE1_DONE and not job.stage1_approved:
                    raise IllegalTransitionError(
                        f"job {job_id}: stage 1 awaits review approval", state=job.state.value
                    )
                if job.state is JobState.MASK_READY and not allow_rerun:
                    raise IllegalTransitionError(
                        f"job {job_id}: segmentation already ran; use retry_segmentation",
                        state=job.state.value,
                    )
                self._transition(job, JobState.SEGMENTING, cause)
            job.mask_approved = False
            if "m_osf_edited" in job.artifacts:
                # A stale human edit cannot survive a recomputed mask.
                self.store.delete(job.id, "m_osf_edited")
                del job.artifacts["m_osf_edited"]
            self.store.save_job(job)
            return job

    def execute_segmentation(self, job_id: str) -> CompositionJob:
        with self._lock(job_id):
            job = self.store.load_job(job_id)
            if job.state is not JobState.SEGMENTING:
                raise IllegalTransitionError(
                    f"job {job_id}: segmentation is not running", state=job.state.value
                )
            bg = self.store.get_image(job.id, "i_bg")
            composite = self.store.get_image(job.id, "i_os")
            sidecar = None
            if self.store.has(job.id, "sidecar_alpha"):
                sidecar = SidecarAlpha(mask=self.store.get_mask(job.id, "sidecar_alpha"))

            _, segmenter, _ = build_backends(job.profile)
            try:
                raw = segmenter.segment(composite, job.box, sidecar=sidecar)
                job.artifacts["m_raw"] = self.store.put_mask(job.id, "m_raw", raw, replace=True)
                refined = refine_mask(
                    raw, job.box, margin=job.profile.refine_margin, policy=job.profile.refine_policy
                )
            except BackendUnavailableError as exc:
                self._fail(job, SEGMENTATION, "backend_unavailable", str(exc))
                return job
            except EmptyMaskError as exc:
                self._fail(job, SEGMENTATION, "segmentation_empty", str(exc))
                return job
            except MissingOracleError as exc:
                self._fail(job, SEGMENTATION, "configuration", str(exc))
                return job

            masked_bg2 = erase(bg, refined)
            job.artifacts["m_osf"] = self.store.put_mask(job.id, "m_osf", refined, replace=True)
            job.artifacts["i_mbg2"] = self.store.put_image(job.id, "i_mbg2", masked_bg2, replace=True)
            self._transition(job, JobState.MASK_READY, "segmentation complete")
            return job

    def run_segmentation(self, job_id: str) -> CompositionJob:
        self.begin_segmentation(job_id)
        return self.execute_segmentation(job_id)

    def retry_segmentation(self, job_id: str, new_seed: int | None = None) -> CompositionJob:
        self.begin_segmentation(
            job_id, cause="retry_segmentation", new_seed=new_seed, allow_rerun=True
        )
        return self.execute_segmentation(job_id)

    def accept_mask(
        self,
        job_id: str,
        edited: BinaryMask | None = None,
        edited_png: bytes | None = None,
    ) -> CompositionJob:
        """Approve the mask gate, optionally substituting a human-edited mask.

        The edited mask must match the frame, stay inside the margin-dilated
        box, and survive refinement non-empty. When ``edited_png`` decodes to
        exactly ``edited``, those bytes are stored verbatim so clients can
        verify their upload round-trips untouched.
        """
        with self._lock(job_id):
            job = self.store.load_job(job_id)
            if job.state is not JobState.MASK_READY:
                raise IllegalTransitionError(
                    f"job {job_id}: accept_mask requires mask_ready, is {job.state.value}",
                    state=job.state.value,
                )
            if edited is not None:
                bg = self.store.get_image(job.id, "i_bg")
                edited.require_same_shape(bg, what="edited mask")
                allowed = dilate(
                    rasterize_box(job.box, bg.width, bg.height), job.profile.refine_margin
                )
                if (edited.bits & ~allowed.bits & 1).any():
                    raise InvalidArgumentError(
                        "edited mask has pixels outside the margin-dilated box"
                    )
                try:
                    refine_mask(
                        edited, job.box,
                        margin=job.profile.refine_margin, policy=job.profile.refine_policy,
                    )
                except EmptyMaskError:
                    raise InvalidArgumentError("edited mask is empty after refinement") from None
                payload = edited_png
                if payload is None or load_mask_png(payload) != edited:
                    payload = edited.to_png_bytes()
                job.artifacts["m_osf_edited"] = self.store.put_bytes(
                    job.id, "m_osf_edited", payload, replace=True
                )
                job.artifacts["i_mbg2"] = self.store.put_image(
                    job.id, "i_mbg2", erase(bg, edited), replace=True
                )
                self._note(job, "accept_mask(edited)")
            else:
                self._note(job, "accept_mask")
            job.mask_approved = True
            self.store.save_job(job)
            return job

    # -- stage 2 -------------------------------------------------------------

    def begin_stage2(self, job_id: str, cause: str = "run_stage2") -> CompositionJob:
        with self._lock(job_id):
            job = self.store.load_job(job_id)
            if job.state is JobState.FAILED:
                self._enter_retry(job, STAGE2, cause)
            else:
                if (
                    job.state is JobState.MASK_READY
                    and job.mode == "review"
                    and not job.mask_approved
                ):
                    raise IllegalTransitionError(
                        f"job {job_id}: mask awaits review approval", state=job.state.value
                    )
                self._transition(job, JobState.STAGE2_RUNNING, cause)
            return job

    def execute_stage2(self, job_id: str) -> CompositionJob:
        with self._lock(job_id):
            job = self.store.load_job(job_id)
            if job.state is not JobState.STAGE2_RUNNING:
                raise IllegalTransitionError(
                    f"job {job_id}: stage 2 is not running", state=job.state.value
                )
            bg = self.store.get_image(job.id, "i_bg")
            ref = self.store.get_image(job.id, job.reference_refs[job.selected_reference])
            mask_name = "m_osf_edited" if "m_osf_edited" in job.artifacts else "m_osf"
            fg_mask = self.store.get_mask(job.id, mask_name)
            masked_bg2 = self.store.get_image(job.id, "i_mbg2")

            _, _, refiner = build_backends(job.profile)
            try:
                candidate = refiner.refine(masked_bg2, fg_mask, ref, seed=job.seed)
            except (BackendUnavailableError, EmptyReferenceError) as exc:
                code = (
                    "backend_unavailable"
                    if isinstance(exc, BackendUnavailableError)
                    else "empty_reference"
                )
                self._fail(job, STAGE2, code, str(exc))
                return job

            final = composite_preserving_background(
                candidate.with_channels(bg.channels), bg, fg_mask
            )
            job.artifacts["i_ins"] = self.store.put_image(job.id, "i_ins", final, replace=True)
            self._transition(job, JobState.DONE, "stage2 complete")
            return job

    def run_stage2(self, job_id: str) -> CompositionJob:
        self.begin_stage2(job_id)
        return self.execute_stage2(job_id)

    # -- whole pipeline --------------------------------------------------------

    def run_full(self, job_id: str) -> CompositionJob:
        """Created -> Done in one call; auto mode only."""
        job = self.store.load_job(job_id)
        if job.mode != "auto":
            raise IllegalTransitionError(f"job {job_id}: run_full requires auto mode")
        job = self.run_stage1(job_id)
        if job.state is JobState.FAILED:
            return job
        job = self.run_segmentation(job_id)
        if job.state is JobState.FAILED:
            return job
        return self.run_stage2(job_id)
