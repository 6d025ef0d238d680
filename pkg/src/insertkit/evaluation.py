"""Benchmark manifest ingestion, composition-quality metrics, batch runner.

The metrics quantify what a good composite must do: leave the background
untouched (bg_preservation), stay inside the requested placement box
(bbox_adherence), match a known silhouette (mask_iou), and carry the
reference object's colors and structure into the final image
(fidelity_hist / fidelity_ssim). All metric constants are fixed here and
recorded in the CSV header; every metric is a pure function.
"""

from __future__ import annotations

import json
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .backends import BackendProfile, key_reference, tight_bbox
from .errors import InsertKitError, ManifestError, UndefinedMetricError
from .imaging import (
    BinaryMask,
    PlacementBox,
    RasterImage,
    load_image_png,
    load_mask_png,
    resample,
)
from .pipeline import JobState, Pipeline

__all__ = [
    "SampleManifest",
    "MetricReport",
    "load_manifest",
    "bg_preservation",
    "bbox_adherence",
    "mask_iou",
    "fidelity_hist",
    "fidelity_ssim",
    "contact_sheet",
    "run_batch",
    "write_csv",
    "run_best_of",
    "convert_benchmark_checkout",
    "HIST_BINS",
    "SSIM_PATCH",
    "SSIM_WINDOW",
]

HIST_BINS = 32
SSIM_PATCH = 64
SSIM_WINDOW = 8
_SSIM_C1 = (0.01 * 255.0) ** 2
_SSIM_C2 = (0.03 * 255.0) ** 2

CSV_COLUMNS = [
    "sample_id",
    "profile",
    "bg_max_abs",
    "bg_mean_abs",
    "bbox_adherence",
    "mask_iou",
    "fidelity_hist",
    "fidelity_ssim",
    "wall_time_s",
    "status",
]


@dataclass(frozen=True)
class SampleManifest:
    """One benchmark sample: paths plus placement annotation."""

    sample_id: str
    background_path: Path
    box: PlacementBox
    reference_paths: tuple[Path, ...]
    category: str = ""
    gt_alpha_path: Path | None = None


@dataclass
class MetricReport:
    sample_id: str
    profile: str
    bg_max_abs: float | None = None
    bg_mean_abs: float | None = None
    bbox_adherence: float | None = None
    mask_iou: float | None = None
    fidelity_hist: float | None = None
    fidelity_ssim: float | None = None
    wall_time: float = 0.0
    status: str = "ok"

    def row(self) -> list[str]:
        def fmt(v, spec="%.6f"):
            return "" if v is None else spec % v

        return [
            self.sample_id,
            self.profile,
            fmt(self.bg_max_abs, "%.1f"),
            fmt(self.bg_mean_abs),
            fmt(self.bbox_adherence),
            fmt(self.mask_iou),
            fmt(self.fidelity_hist),
            fmt(self.fidelity_ssim),
            "%.0f" % self.wall_time,
            self.status,
        ]


def load_manifest(path: str | Path) -> list[SampleManifest]:
    """Parse and validate a manifest document; order preserved.

    Backgrounds are opened only far enough to read their dimensions, but
    every box is validated against them up front so a bad record fails at
    load time, named by its sample_id.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from None
    if isinstance(doc, dict):
        doc = doc.get("samples", None)
    if not isinstance(doc, list):
        raise ManifestError("manifest must be a list of sample records")

    base = path.parent
    samples: list[SampleManifest] = []
    for i, rec in enumerate(doc):
        sid = rec.get("sample_id") if isinstance(rec, dict) else None
        label = sid or f"record #{i}"
        if not isinstance(rec, dict) or not sid:
            raise ManifestError(f"{label}: record must be an object with a sample_id")
        try:
            box = PlacementBox(*[int(v) for v in rec["box"]])
            bg_path = (base / rec["background"]).resolve()
            ref_paths = tuple((base / r).resolve() for r in rec["references"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{label}: malformed record ({exc})") from None
        if not ref_paths:
            raise ManifestError(f"{label}: needs at least one reference")
        if not bg_path.exists():
            raise ManifestError(f"{label}: background not found: {bg_path}")
        for rp in ref_paths:
            if not rp.exists():
                raise ManifestError(f"{label}: reference not found: {rp}")
        gt_path = None
        if rec.get("gt_alpha"):
            gt_path = (base / rec["gt_alpha"]).resolve()
            if not gt_path.exists():
                raise ManifestError(f"{label}: gt_alpha not found: {gt_path}")
        with Image.open(bg_path) as im:
            width, height = im.size
        try:
            box.validate_within(width, height)
        except InsertKitError as exc:
            raise ManifestError(f"{label}: {exc}") from None
        samples.append(
            SampleManifest(
                sample_id=sid,
                background_path=bg_path,
                box=box,
                reference_paths=ref_paths,
                category=rec.get("category", ""),
                gt_alpha_path=gt_path,
            )
        )
    return samples


# -- metrics -----------------------------------------------------------------


def bg_preservation(
    ins: RasterImage, bg: RasterImage, mask: BinaryMask
) -> tuple[float, float]:
    """(max, mean) absolute channel difference over the mask's 0-set."""
    mask.require_same_shape(bg)
    mask.require_same_shape(ins, what="composite mask")
    outside = mask.bits == 0
    if not outside.any():
        raise UndefinedMetricError("mask covers the whole frame; no background region")
    a = ins.pixels[:, :, :3][outside].astype(np.int64)
    b = bg.pixels[:, :, :3][outside].astype(np.int64)
    diff = np.abs(a - b)
    return float(diff.max()), float(diff.mean())


def bbox_adherence(mask: BinaryMask, box: PlacementBox) -> float:
    """Fraction of mask pixels inside the box."""
    total = mask.popcount
    if total == 0:
        raise UndefinedMetricError("bbox_adherence is undefined for an empty mask")
    region = mask.bits[box.y : box.y + box.h, box.x : box.x + box.w]
    return float(region.sum() / total)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    a.require_same_shape(b, what="first mask")
    union = int((a.bits | b.bits).sum())
    if union == 0:
        return 1.0
    inter = int((a.bits & b.bits).sum())
    return inter / union


def _channel_histograms(values: np.ndarray) -> np.ndarray:
    # values: (N, 3) uint8; returns (3, HIST_BINS) normalized
    shift = 8 - HIST_BINS.bit_length() + 1  # 256 / HIST_BINS = 2**shift
    out = np.empty((3, HIST_BINS), dtype=np.float64)
    for c in range(3):
        out[c] = np.bincount(values[:, c] >> shift, minlength=HIST_BINS)
    return out / values.shape[0]


def fidelity_hist(reference: RasterImage, composed: RasterImage, mask: BinaryMask) -> float:
    """Histogram intersection between reference foreground and masked region.

    32 bins per channel, normalized, averaged over R, G, B.
    """
    mask.require_same_shape(composed)
    if mask.popcount == 0:
        raise UndefinedMetricError("fidelity_hist is undefined for an empty mask")
    fg = key_reference(reference)
    ref_vals = reference.pixels[:, :, :3][fg.bits == 1]
    comp_vals = composed.pixels[:, :, :3][mask.bits == 1]
    h_ref = _channel_histograms(ref_vals)
    h_comp = _channel_histograms(comp_vals)
    return float(np.minimum(h_ref, h_comp).sum(axis=1).mean())


def _to_gray(px: np.ndarray) -> np.ndarray:
    return 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]


def _ssim_mean(x: np.ndarray, y: np.ndarray, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all window x window patches (population statistics)."""
    from numpy.lib.stride_tricks import sliding_window_view

    xw = sliding_window_view(x, (window, window)).reshape(-1, window * window)
    yw = sliding_window_view(y, (window, window)).reshape(-1, window * window)
    mx = xw.mean(axis=1)
    my = yw.mean(axis=1)
    vx = xw.var(axis=1)
    vy = yw.var(axis=1)
    cov = (xw * yw).mean(axis=1) - mx * my
    num = (2 * mx * my + _SSIM_C1) * (2 * cov + _SSIM_C2)
    den = (mx**2 + my**2 + _SSIM_C1) * (vx + vy + _SSIM_C2)
    return float((num / den).mean())


def fidelity_ssim(reference: RasterImage, composed: RasterImage, mask: BinaryMask) -> float:
    """Grayscale SSIM between the two tight-cropped regions.

    Both regions are resampled to a common 64x64 patch; SSIM uses sliding
    8x8 windows with the standard stabilizing constants; the result is
    clamped to [0, 1].
    """
    mask.require_same_shape(composed)
    if mask.popcount == 0:
        raise UndefinedMetricError("fidelity_ssim is undefined for an empty mask")
    fg = key_reference(reference)
    mask_bb = tight_bbox(mask)
    ref_bb = tight_bbox(fg)
    if min(mask_bb.w, mask_bb.h, ref_bb.w, ref_bb.h) < 2:
        raise UndefinedMetricError("fidelity_ssim is undefined for single-pixel regions")

    comp_crop = RasterImage(
        pixels=composed.pixels[
            mask_bb.y : mask_bb.y + mask_bb.h, mask_bb.x : mask_bb.x + mask_bb.w, :3
        ].copy()
    )
    ref_crop = RasterImage(
        pixels=reference.pixels[
            ref_bb.y : ref_bb.y + ref_bb.h, ref_bb.x : ref_bb.x + ref_bb.w, :3
        ].copy()
    )
    a = _to_gray(resample(comp_crop, SSIM_PATCH, SSIM_PATCH, "bilinear").pixels.astype(np.float64))
    b = _to_gray(resample(ref_crop, SSIM_PATCH, SSIM_PATCH, "bilinear").pixels.astype(np.float64))
    return float(np.clip(_ssim_mean(a, b), 0.0, 1.0))


# -- batch runner --------------------------------------------------------------


def contact_sheet(
    background: RasterImage,
    box: PlacementBox,
    references: list[RasterImage],
    stage1: RasterImage | None,
    final: RasterImage | None,
    panel_height: int = 128,
) -> RasterImage:
    """Comparison strip: background with box outline, references, stages."""
    boxed = np.array(background.pixels[:, :, :3])
    x1, y1 = box.x + box.w - 1, box.y + box.h - 1
    boxed[box.y, box.x : x1 + 1] = (255, 48, 48)
    boxed[y1, box.x : x1 + 1] = (255, 48, 48)
    boxed[box.y : y1 + 1, box.x] = (255, 48, 48)
    boxed[box.y : y1 + 1, x1] = (255, 48, 48)

    panels = [RasterImage(pixels=boxed)]
    panels.extend(r.rgb() for r in references)
    for img in (stage1, final):
        if img is not None:
            panels.append(img.rgb())

    scaled = []
    for p in panels:
        w = max(1, round(p.width * panel_height / p.height))
        scaled.append(resample(p, w, panel_height, "bilinear").pixels)
    sep = np.full((panel_height, 4, 3), 32, dtype=np.uint8)
    parts: list[np.ndarray] = []
    for i, s in enumerate(scaled):
        if i:
            parts.append(sep)
        parts.append(s)
    return RasterImage(pixels=np.concatenate(parts, axis=1))


def _evaluate_sample(
    pipeline: Pipeline,
    sample: SampleManifest,
    profile: BackendProfile,
    seed: int,
    out_dir: Path,
) -> MetricReport:
    report = MetricReport(sample_id=sample.sample_id, profile=profile.name)
    started = time.monotonic()
    try:
        background = load_image_png(sample.background_path)
        references = [load_image_png(p) for p in sample.reference_paths]
        job_id = f"{sample.sample_id}--{profile.name}".replace("/", "_")
        job = pipeline.create_job(
            background, references, sample.box, profile, mode="auto", seed=seed, job_id=job_id
        )
        job = pipeline.run_full(job.id)
        report.wall_time = time.monotonic() - started
        if job.state is not JobState.DONE:
            report.status = f"failed:{job.error.code if job.error else 'unknown'}"
            return report

        store = pipeline.store
        mask = store.get_mask(job.id, "m_osf")
        i_os = store.get_image(job.id, "i_os")
        i_ins = store.get_image(job.id, "i_ins")
        reference = references[job.selected_reference]

        report.bg_max_abs, report.bg_mean_abs = bg_preservation(i_ins, background, mask)
        report.bbox_adherence = bbox_adherence(mask, sample.box)
        if store.has(job.id, "sidecar_alpha"):
            report.mask_iou = mask_iou(mask, store.get_mask(job.id, "sidecar_alpha"))
        elif sample.gt_alpha_path is not None:
            report.mask_iou = mask_iou(mask, load_mask_png(sample.gt_alpha_path))
        report.fidelity_hist = fidelity_hist(reference, i_ins, mask)
        report.fidelity_ssim = fidelity_ssim(reference, i_ins, mask)

        sheet = contact_sheet(background, sample.box, references, i_os, i_ins)
        sheets = out_dir / "sheets"
        sheets.mkdir(parents=True, exist_ok=True)
        sheet.save_png(sheets / f"{job_id}.png")
    except InsertKitError as exc:
        report.wall_time = time.monotonic() - started
        report.status = f"failed:{exc.__class__.__name__}: {exc}"
    return report


def run_batch(
    samples: list[SampleManifest],
    profiles: list[BackendProfile],
    out_dir: str | Path,
    parallel: int = 1,
    seed: int = 0,
    store_root: str | Path | None = None,
) -> list[MetricReport]:
    """Run every (sample, profile) pair; write reports, sheets, and a CSV.

    Individual failures are recorded in their report row and do not stop
    the batch. Output order is stable by (sample_id, profile) regardless
    of parallelism.
    """
    if not profiles:
        raise ManifestError("at least one profile is required")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipeline = Pipeline(store_root or out / "jobs")

    pairs = [(s, p) for s in samples for p in profiles]
    if parallel <= 1:
        reports = [_evaluate_sample(pipeline, s, p, seed, out) for s, p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            reports = list(
                pool.map(lambda sp: _evaluate_sample(pipeline, sp[0], sp[1], seed, out), pairs)
            )
    reports.sort(key=lambda r: (r.sample_id, r.profile))

    for report in reports:
        rep_dir = out / "reports"
        rep_dir.mkdir(parents=True, exist_ok=True)
        rep_path = rep_dir / f"{report.sample_id}--{report.profile}.json".replace("/", "_")
        rep_path.write_text(json.dumps(report.__dict__, indent=2, sort_keys=True))

    write_csv(reports, out / "summary.csv")
    return reports


def write_csv(reports: list[MetricReport], path: str | Path) -> None:
    """Summary CSV: one row per report plus one mean row per profile."""
    lines = [
        "# metrics are artifact-defined proxies; no published numeric baseline exists",
        f"# constants: hist_bins={HIST_BINS} ssim_patch={SSIM_PATCH}x{SSIM_PATCH} ssim_window={SSIM_WINDOW}x{SSIM_WINDOW}",
        ",".join(CSV_COLUMNS),
    ]
    for report in reports:
        lines.append(",".join(report.row()))

    by_profile: dict[str, list[MetricReport]] = {}
    for report in reports:
        by_profile.setdefault(report.profile, []).append(report)
    for name in sorted(by_profile):
        ok = [r for r in by_profile[name] if r.status == "ok"]
        mean = MetricReport(sample_id="MEAN", profile=name, status=f"ok={len(ok)}/{len(by_profile[name])}")
        if ok:
            for attr in ("bg_max_abs", "bg_mean_abs", "bbox_adherence", "mask_iou", "fidelity_hist", "fidelity_ssim"):
                vals = [getattr(r, attr) for r in ok if getattr(r, attr) is not None]
                if vals:
                    setattr(mean, attr, sum(vals) / len(vals))
            mean.wall_time = sum(r.wall_time for r in ok) / len(ok)
        lines.append(",".join(mean.row()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_best_of(
    pipeline: Pipeline,
    background: RasterImage,
    references: list[RasterImage],
    box: PlacementBox,
    profile: BackendProfile,
    seed: int = 0,
    job_id: str | None = None,
):
    """Run the full pipeline once per reference; keep the best by fidelity_hist."""
    base = job_id or uuid.uuid4().hex[:12]
    best_job = None
    best_score = -1.0
    for k in range(len(references)):
        job = pipeline.create_job(
            background, references, box, profile,
            mode="auto", seed=seed, selected_reference=k, job_id=f"{base}-ref{k}",
        )
        job = pipeline.run_full(job.id)
        if job.state is not JobState.DONE:
            if best_job is None:
                best_job = job
            continue
        mask = pipeline.store.get_mask(job.id, "m_osf")
        i_ins = pipeline.store.get_image(job.id, "i_ins")
        score = fidelity_hist(references[k], i_ins, mask)
        if score > best_score:
            best_score = score
            best_job = job
    return best_job


def convert_benchmark_checkout(root: str | Path, out_path: str | Path) -> int:
    """Map an on-disk benchmark checkout onto a manifest file.

    Expected layout, one folder per category::

        <root>/<category>/bg/<sample>.png
        <root>/<category>/bbox/<sample>.txt      # "x1 y1 x2 y2"
        <root>/<category>/fg/<sample>/*.png      # one or more references

    Returns the number of samples written.
    """
    root = Path(root)
    if not root.is_dir():
        raise ManifestError(f"checkout directory not found: {root}")
    out_path = Path(out_path)
    records = []
    for category_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        bg_dir = category_dir / "bg"
        bbox_dir = category_dir / "bbox"
        fg_dir = category_dir / "fg"
        if not bg_dir.is_dir():
            continue
        for bg_file in sorted(bg_dir.glob("*.png")) + sorted(bg_dir.glob("*.jpg")):
            stem = bg_file.stem
            bbox_file = bbox_dir / f"{stem}.txt"
            refs_dir = fg_dir / stem
            if not bbox_file.exists() or not refs_dir.is_dir():
                continue
            coords = bbox_file.read_text().split()
            if len(coords) != 4:
                raise ManifestError(f"{bbox_file}: expected 4 numbers, got {len(coords)}")
            x1, y1, x2, y2 = (int(float(v)) for v in coords)
            refs = sorted(refs_dir.glob("*.png")) + sorted(refs_dir.glob("*.jpg"))
            if not refs:
                continue
            records.append(
                {
                    "sample_id": f"{category_dir.name}/{stem}",
                    "background": str(bg_file.relative_to(out_path.parent)),
                    "box": [x1, y1, x2 - x1, y2 - y1],
                    "references": [str(r.relative_to(out_path.parent)) for r in refs],
                    "category": category_dir.name,
                }
            )
    out_path.write_text(json.dumps(records, indent=2))
    return len(records)
