"""HTTP facade over the pipeline: submission, artifacts, review, batches.

The API is stateless above the job store: every committed job survives a
restart. Stage computation runs on a worker pool while clients poll
GET /jobs/{id}; review actions apply their state transition synchronously
(so concurrent actions on one job resolve to exactly one winner and 409s
for the rest) and only the heavy stage work is deferred.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Form, Request, Response, UploadFile
from fastapi.responses import JSONResponse

from .backends import BackendProfile, default_profiles
from .errors import (
    IllegalTransitionError,
    InsertKitError,
    InvalidArgumentError,
    ManifestError,
    UnknownJobError,
)
from .evaluation import load_manifest, run_batch
from .imaging import PlacementBox, load_image_png, load_mask_png
from .pipeline import Pipeline

__all__ = ["ServiceConfig", "create_app"]

ENV_ARTIFACT_ROOT = "INSERTKIT_ARTIFACT_ROOT"
ENV_PROFILES = "INSERTKIT_PROFILES"


@dataclass
class ServiceConfig:
    artifact_root: Path = Path("./insertkit-jobs")
    profiles: dict[str, BackendProfile] = field(default_factory=default_profiles)
    eval_root: Path | None = None
    max_workers: int = 4

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        profiles = {
            name: BackendProfile.from_dict(spec, name=name)
            for name, spec in data.get("profiles", {}).items()
        } or default_profiles()
        return cls(
            artifact_root=Path(data.get("artifact_root", "./insertkit-jobs")),
            profiles=profiles,
            eval_root=Path(data["eval_root"]) if data.get("eval_root") else None,
            max_workers=int(data.get("max_workers", 4)),
        )

    def apply_env(self) -> "ServiceConfig":
        root = os.environ.get(ENV_ARTIFACT_ROOT)
        if root:
            self.artifact_root = Path(root)
        profiles_path = os.environ.get(ENV_PROFILES)
        if profiles_path:
            data = json.loads(Path(profiles_path).read_text(encoding="utf-8"))
            self.profiles = {
                name: BackendProfile.from_dict(spec, name=name) for name, spec in data.items()
            }
        return self


def _field_error(status: int, field_name: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"field": field_name, "message": message}}
    )


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"message": message}})


def _job_document(pipeline: Pipeline, job) -> dict:
    return {
        "id": job.id,
        "state": job.state.value,
        "mode": job.mode,
        "profile": job.profile.name,
        "seed": job.seed,
        "box": job.box.as_list(),
        "selected_reference": job.selected_reference,
        "artifacts": sorted(job.artifacts),
        "error": job.error.to_dict() if job.error else None,
        "stage1_approved": job.stage1_approved,
        "mask_approved": job.mask_approved,
        "transitions": job.transitions,
    }


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig().apply_env()
    app = FastAPI(title="insertkit", version="0.1.0")
    pipeline = Pipeline(config.artifact_root)
    executor = ThreadPoolExecutor(max_workers=config.max_workers)
    batches: dict[str, dict] = {}
    batches_lock = threading.Lock()

    app.state.config = config
    app.state.pipeline = pipeline

    def submit(fn, *args, **kwargs):
        def safe():
            try:
                fn(*args, **kwargs)
            except InsertKitError:
                pass  # recorded on the job itself

        executor.submit(safe)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/jobs", status_code=201)
    async def submit_job(
        background: UploadFile,
        references: list[UploadFile],
        box: str = Form(...),
        mode: str = Form("auto"),
        profile: str = Form("mock-oracle"),
        seed: int = Form(0),
    ):
        if profile not in config.profiles:
            return _error(404, f"unknown profile {profile!r}")
        if mode not in ("auto", "review"):
            return _field_error(400, "mode", f"mode must be auto or review, got {mode!r}")
        try:
            placement = PlacementBox.parse(box)
        except InvalidArgumentError as exc:
            return _field_error(400, "box", str(exc))
        try:
            bg = load_image_png(await background.read())
        except Exception:
            return _field_error(400, "background", "background is not a decodable image")
        refs = []
        for i, upload in enumerate(references):
            try:
                refs.append(load_image_png(await upload.read()))
            except Exception:
                return _field_error(400, "references", f"reference #{i} is not a decodable image")
        try:
            job = pipeline.create_job(
                bg, refs, placement, config.profiles[profile], mode=mode, seed=seed
            )
        except InvalidArgumentError as exc:
            return _field_error(400, "box", str(exc))
        if mode == "auto":
            submit(pipeline.run_full, job.id)
        else:
            submit(pipeline.run_stage1, job.id)
        return {"id": job.id, "state": job.state.value}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            job = pipeline.get_job(job_id)
        except UnknownJobError:
            return _error(404, f"unknown job {job_id!r}")
        return _job_document(pipeline, job)

    @app.get("/jobs/{job_id}/artifacts/{name}")
    def get_artifact(job_id: str, name: str):
        try:
            job = pipeline.get_job(job_id)
        except UnknownJobError:
            return _error(404, f"unknown job {job_id!r}")
        if name not in job.artifacts:
            return _error(404, f"artifact {name!r} not committed")
        data = pipeline.store.get_bytes(job_id, name)
        etag = hashlib.sha256(data).hexdigest()
        return Response(content=data, media_type="image/png", headers={"ETag": f'"{etag}"'})

    @app.post("/jobs/{job_id}/actions")
    async def review_action(
        job_id: str,
        action: str = Form(...),
        new_seed: int | None = Form(None),
        mask: UploadFile | None = None,
    ):
        try:
            pipeline.get_job(job_id)
        except UnknownJobError:
            return _error(404, f"unknown job {job_id!r}")

        try:
            if action == "approve_stage1":
                pipeline.approve_stage1(job_id)
                job = pipeline.begin_segmentation(job_id, cause="approve_stage1")
                submit(pipeline.execute_segmentation, job_id)
            elif action == "retry_stage1":
                job = pipeline.begin_stage1(
                    job_id, cause="retry_stage1", new_seed=new_seed, allow_rerun=True
                )
                submit(pipeline.execute_stage1, job_id)
            elif action == "approve_mask":
                edited = None
                payload = None
                if mask is not None:
                    payload = await mask.read()
                    try:
                        edited = load_mask_png(payload)
                    except Exception:
                        return _field_error(400, "mask", "mask is not a decodable PNG")
                job = pipeline.accept_mask(job_id, edited=edited, edited_png=payload)
                job = pipeline.begin_stage2(job_id, cause="approve_mask")
                submit(pipeline.execute_stage2, job_id)
            elif action == "retry_segmentation":
                job = pipeline.begin_segmentation(
                    job_id, cause="retry_segmentation", new_seed=new_seed, allow_rerun=True
                )
                submit(pipeline.execute_segmentation, job_id)
            else:
                return _field_error(400, "action", f"unknown action {action!r}")
        except IllegalTransitionError as exc:
            return _error(409, str(exc))
        except InvalidArgumentError as exc:
            return _field_error(400, "mask", str(exc))
        return _job_document(pipeline, job)

    @app.post("/eval/batches", status_code=202)
    def submit_batch(body: dict):
        manifest_path = body.get("manifest")
        profile_names = body.get("profiles", [])
        parallel = int(body.get("parallel", 1))
        if not manifest_path:
            return _field_error(400, "manifest", "manifest path is required")
        unknown = [n for n in profile_names if n not in config.profiles]
        if unknown:
            return _error(404, f"unknown profiles: {unknown}")
        if not profile_names:
            return _field_error(400, "profiles", "at least one profile is required")
        try:
            samples = load_manifest(manifest_path)
        except ManifestError as exc:
            return _field_error(400, "manifest", str(exc))

        batch_id = uuid.uuid4().hex[:12]
        out_dir = (config.eval_root or config.artifact_root / "eval") / batch_id
        record = {"id": batch_id, "state": "running", "out_dir": str(out_dir), "csv": None}
        with batches_lock:
            batches[batch_id] = record

        def run():
            try:
                reports = run_batch(
                    samples,
                    [config.profiles[n] for n in profile_names],
                    out_dir,
                    parallel=parallel,
                )
                with batches_lock:
                    record["state"] = "done"
                    record["csv"] = str(Path(out_dir) / "summary.csv")
                    record["failed"] = sum(1 for r in reports if r.status != "ok")
                    record["total"] = len(reports)
            except Exception as exc:  # batch crash, not per-sample failure
                with batches_lock:
                    record["state"] = "failed"
                    record["error"] = str(exc)

        executor.submit(run)
        return {"id": batch_id, "state": "running"}

    @app.get("/eval/batches/{batch_id}")
    def get_batch(batch_id: str):
        with batches_lock:
            record = batches.get(batch_id)
            if record is None:
                return _error(404, f"unknown batch {batch_id!r}")
            return dict(record)

    @app.exception_handler(InsertKitError)
    async def on_insertkit_error(request: Request, exc: InsertKitError):
        if isinstance(exc, IllegalTransitionError):
            return _error(409, str(exc))
        if isinstance(exc, UnknownJobError):
            return _error(404, str(exc))
        return _error(400, str(exc))

    return app
