"""Command-line front door: single runs, batch eval, conversion, serving.

Thin adapter over the pipeline/evaluation/service modules; no pixel or
state-machine logic lives here. Exit codes: 0 success, 2 validation
error, 3 backend/stage failure, 4 batch completed with failing samples.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .backends import BackendProfile, default_profiles
from .errors import InsertKitError, InvalidArgumentError, ManifestError
from .evaluation import (
    bbox_adherence,
    bg_preservation,
    convert_benchmark_checkout,
    fidelity_hist,
    fidelity_ssim,
    load_manifest,
    mask_iou,
    run_batch,
)
from .imaging import PlacementBox, load_image_png
from .pipeline import JobState, Pipeline
from .service import ENV_ARTIFACT_ROOT, ENV_PROFILES, ServiceConfig, create_app

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_SAMPLES_FAILED = 4


def _load_profiles() -> dict[str, BackendProfile]:
    """Profile table: built-ins, overridable via the profiles env var."""
    path = os.environ.get(ENV_PROFILES)
    if not path:
        return default_profiles()
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {name: BackendProfile.from_dict(spec, name=name) for name, spec in data.items()}


def _resolve_out(arg: str | None) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get(ENV_ARTIFACT_ROOT, "./insertkit-out"))


def cmd_run(args: argparse.Namespace) -> int:
    try:
        box = PlacementBox.parse(args.box)
        profiles = _load_profiles()
        if args.profile not in profiles:
            print(f"error: unknown profile {args.profile!r}", file=sys.stderr)
            return EXIT_VALIDATION
        background = load_image_png(args.bg)
        references = [load_image_png(p) for p in args.ref]
    except (InsertKitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = _resolve_out(args.out)
    pipeline = Pipeline(out)
    try:
        job = pipeline.create_job(
            background, references, box, profiles[args.profile], mode=args.mode, seed=args.seed
        )
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.mode == "review":
        job = pipeline.run_stage1(job.id)
        if job.state is JobState.FAILED:
            print(f"stage {job.error.stage} failed: {job.error.message}", file=sys.stderr)
            return EXIT_BACKEND
        print(f"job {job.id} awaiting review at {pipeline.store.job_dir(job.id)}")
        print("resume via: insertkit serve")
        return EXIT_OK

    job = pipeline.run_full(job.id)
    if job.state is not JobState.DONE:
        stage = job.error.stage if job.error else "unknown"
        message = job.error.message if job.error else "unknown failure"
        print(f"stage {stage} failed: {message}", file=sys.stderr)
        return EXIT_BACKEND

    store = pipeline.store
    final_path = store.job_dir(job.id) / "i_ins.png"
    mask = store.get_mask(job.id, "m_osf")
    i_ins = store.get_image(job.id, "i_ins")
    reference = references[job.selected_reference]
    max_abs, mean_abs = bg_preservation(i_ins, background, mask)
    print(f"composite: {final_path}")
    print(f"bg_max_abs={max_abs:.1f} bg_mean_abs={mean_abs:.4f}")
    print(f"bbox_adherence={bbox_adherence(mask, box):.4f}")
    if store.has(job.id, "sidecar_alpha"):
        print(f"mask_iou={mask_iou(mask, store.get_mask(job.id, 'sidecar_alpha')):.4f}")
    print(f"fidelity_hist={fidelity_hist(reference, i_ins, mask):.4f}")
    try:
        print(f"fidelity_ssim={fidelity_ssim(reference, i_ins, mask):.4f}")
    except InsertKitError:
        pass  # degenerate region; other metrics already reported
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        samples = load_manifest(args.manifest)
        profiles = _load_profiles()
        names = [n.strip() for n in args.profiles.split(",") if n.strip()]
        if not names:
            raise ManifestError("no profiles given")
        missing = [n for n in names if n not in profiles]
        if missing:
            raise ManifestError(f"unknown profiles: {missing}")
    except InsertKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    reports = run_batch(
        samples,
        [profiles[n] for n in names],
        _resolve_out(args.out),
        parallel=args.parallel,
        seed=args.seed,
    )
    failed = [r for r in reports if r.status != "ok"]
    print(f"{len(reports)} reports written to {_resolve_out(args.out) / 'summary.csv'}")
    if failed:
        for r in failed:
            print(f"failed: {r.sample_id} [{r.profile}]: {r.status}", file=sys.stderr)
        return EXIT_SAMPLES_FAILED
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        host, _, port_text = args.addr.rpartition(":")
        port = int(port_text)
        if not host:
            raise ValueError("address must be HOST:PORT")
        if args.config:
            config = ServiceConfig.from_file(args.config).apply_env()
        else:
            config = ServiceConfig().apply_env()
    except (OSError, ValueError, json.JSONDecodeError, InsertKitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="info")
    return EXIT_OK


def cmd_convert(args: argparse.Namespace) -> int:
    try:
        count = convert_benchmark_checkout(args.src, args.out)
    except (InsertKitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"wrote {count} samples to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="insertkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one composition job")
    run.add_argument("--bg", required=True, help="background image path")
    run.add_argument("--ref", action="append", required=True, help="reference image path (repeatable)")
    run.add_argument("--box", required=True, help="placement box as x,y,w,h")
    run.add_argument("--profile", default="mock-oracle", help="backend profile name")
    run.add_argument("--mode", choices=("auto", "review"), default="auto")
    run.add_argument("--out", default=None, help="artifact root directory")
    run.add_argument("--seed", type=int, default=0)
    run.set_defaults(fn=cmd_run)

    ev = sub.add_parser("eval", help="run batch evaluation over a manifest")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--profiles", required=True, help="comma-separated profile names")
    ev.add_argument("--out", default=None)
    ev.add_argument("--parallel", type=int, default=1)
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(fn=cmd_eval)

    serve = sub.add_parser("serve", help="serve the HTTP API")
    serve.add_argument("--addr", default="127.0.0.1:8787", help="HOST:PORT")
    serve.add_argument("--config", default=None, help="service config JSON path")
    serve.set_defaults(fn=cmd_serve)

    conv = sub.add_parser("convert", help="map a benchmark checkout to a manifest")
    conv.add_argument("--src", required=True, help="checkout root directory")
    conv.add_argument("--out", required=True, help="manifest output path")
    conv.set_defaults(fn=cmd_convert)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
