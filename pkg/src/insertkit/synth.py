"""Seeded synthetic backgrounds, reference cutouts, and benchmark suites.

Everything here is deterministic in the seed. Backgrounds are smooth
mid-gray gradients with mild texture; references are solid silhouettes
(ellipse or rounded rectangle) filled with blocky saturated-color texture,
so a stage-1 blur measurably disturbs their color histograms and the
offline heuristic segmenter has real contrast to work with.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import PlacementBox, RasterImage

__all__ = [
    "SyntheticSample",
    "make_background",
    "make_reference",
    "make_sample",
    "make_no_contrast_sample",
    "write_suite",
]

# Saturated fill colors; every channel sits well over one 8-value histogram
# bin away from the 90..170 gray band the backgrounds use.
PALETTE = np.array(
    [
        (204, 36, 36),
        (36, 64, 204),
        (36, 168, 60),
        (232, 184, 32),
        (160, 36, 188),
        (36, 196, 196),
        (240, 120, 28),
        (220, 48, 140),
    ],
    dtype=np.uint8,
)

# Warm-only palette for high-contrast samples: every convex mixture of
# these colors (and of them with white) keeps R - B >= 168 * (1 - white
# fraction), which never lands on the gray band. Blur can therefore not
# camouflage any foreground pixel from the color-distance heuristic.
PALETTE_HIGH_CONTRAST = np.array(
    [
        (204, 36, 36),
        (240, 120, 28),
        (232, 184, 32),
    ],
    dtype=np.uint8,
)


@dataclass(frozen=True)
class SyntheticSample:
    sample_id: str
    background: RasterImage
    references: tuple[RasterImage, ...]
    box: PlacementBox
    category: str = "synthetic"


def make_background(seed: int, width: int = 64, height: int = 64) -> RasterImage:
    """Smooth diagonal gray gradient (90..170) with faint seeded texture."""
    rng = np.random.default_rng(seed)
    gx = np.linspace(0.0, 1.0, width)[None, :]
    gy = np.linspace(0.0, 1.0, height)[:, None]
    mix = rng.uniform(0.3, 0.7)
    base = 90.0 + 80.0 * (mix * gx + (1.0 - mix) * gy)
    texture = rng.integers(-4, 5, size=(height, width))
    plane = np.clip(base + texture, 0, 255)
    offsets = rng.integers(-6, 7, size=3)
    px = np.stack([np.clip(plane + o, 0, 255) for o in offsets], axis=2)
    return RasterImage(pixels=px.astype(np.uint8))


def _silhouette(rng: np.random.Generator, size: int) -> np.ndarray:
    """Solid, hole-free, single-component shape mask filling the canvas."""
    yy, xx = np.mgrid[0:size, 0:size]
    cx = cy = (size - 1) / 2.0
    if rng.random() < 0.5:
        rx = size / 2.0 - 0.5
        ry = rx * rng.uniform(0.7, 1.0)
        shape = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    else:
        inset = int(rng.integers(0, max(1, size // 8)))
        shape = np.zeros((size, size), dtype=bool)
        shape[inset : size - inset, :] = True
    return shape


def make_reference(
    seed: int, size: int = 24, style: str = "rgba", block: int = 2, contrast: str = "mixed"
) -> RasterImage:
    """Textured cutout: blocky palette noise inside a solid silhouette.

    ``rgba`` returns a transparent-backed RGBA cutout; ``white`` returns an
    RGB image on a near-white backdrop, exercising the keying path.
    ``contrast="high"`` restricts the texture to the warm palette.
    """
    rng = np.random.default_rng(seed)
    shape = _silhouette(rng, size)

    palette = PALETTE_HIGH_CONTRAST if contrast == "high" else PALETTE
    nby = -(-size // block)
    nbx = -(-size // block)
    idx = rng.integers(0, len(palette), size=(nby, nbx))
    texture = palette[idx].repeat(block, axis=0).repeat(block, axis=1)[:size, :size]

    if style == "rgba":
        px = np.full((size, size, 4), 255, dtype=np.uint8)
        px[:, :, :3] = np.where(shape[:, :, None], texture, np.uint8(255))
        px[:, :, 3] = np.where(shape, 255, 0).astype(np.uint8)
        return RasterImage(pixels=px)
    if style == "white":
        px = np.where(shape[:, :, None], texture, np.uint8(255)).astype(np.uint8)
        return RasterImage(pixels=px)
    raise ValueError(f"unknown reference style {style!r}")


def make_sample(
    seed: int,
    size: int = 64,
    ref_count: int = 1,
    ref_size: int = 24,
    style: str = "rgba",
    contrast: str = "mixed",
) -> SyntheticSample:
    """One benchmark sample: background, box roughly centered, references."""
    rng = np.random.default_rng(seed ^ 0x5EED)
    bg = make_background(seed, size, size)
    bw = int(rng.integers(size // 3, size // 2 + 1))
    bh = int(rng.integers(size // 3, size // 2 + 1))
    bx = int(rng.integers(2, size - bw - 1))
    by = int(rng.integers(2, size - bh - 1))
    refs = tuple(
        make_reference(seed * 1000 + k, size=ref_size, style=style, contrast=contrast)
        for k in range(ref_count)
    )
    prefix = "hicon" if contrast == "high" else "synth"
    return SyntheticSample(
        sample_id=f"{prefix}-{seed:04d}",
        background=bg,
        references=refs,
        box=PlacementBox(bx, by, bw, bh),
        category=f"synthetic-{contrast}",
    )


def make_no_contrast_sample(seed: int = 0, size: int = 64) -> SyntheticSample:
    """Reference indistinguishable from the background: segmentation bait.

    Uniform gray everywhere, so the heuristic segmenter finds no signal
    and the pipeline must surface an empty-segmentation failure.
    """
    gray = (128, 128, 128)
    bg = RasterImage.solid(size, size, gray)
    px = np.zeros((size // 3, size // 3, 4), dtype=np.uint8)
    px[:, :, :3] = 128
    px[:, :, 3] = 255
    ref = RasterImage(pixels=px)
    third = size // 3
    return SyntheticSample(
        sample_id=f"flat-{seed:04d}",
        background=bg,
        references=(ref,),
        box=PlacementBox(third, third, third, third),
        category="no-contrast",
    )


def write_suite(
    out_dir: str | Path,
    count: int,
    seed0: int = 0,
    size: int = 64,
    ref_count: int = 1,
    style: str = "rgba",
    contrast: str = "mixed",
) -> Path:
    """Write a suite to disk and return the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for k in range(count):
        sample = make_sample(seed0 + k, size=size, ref_count=ref_count, style=style, contrast=contrast)
        bg_name = f"{sample.sample_id}_bg.png"
        sample.background.save_png(out / bg_name)
        ref_names = []
        for i, ref in enumerate(sample.references):
            name = f"{sample.sample_id}_ref{i}.png"
            ref.save_png(out / name)
            ref_names.append(name)
        records.append(
            {
                "sample_id": sample.sample_id,
                "background": bg_name,
                "box": sample.box.as_list(),
                "references": ref_names,
                "category": sample.category,
            }
        )
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(records, indent=2))
    return manifest
