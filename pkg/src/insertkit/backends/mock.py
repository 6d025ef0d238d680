"""Deterministic procedural backends: no ML models, fully reproducible.

The mock compositor imitates what a scene-aware generator does to a
reference object: it hallucinates plausible background inside the erased
box, then pastes a scaled-down, slightly blurred copy of the reference.
The blur is deliberate, standing in for the detail loss a real stage-1
model exhibits, so the stage-2 refiner has something measurable to win
back. The refiner mock writes the reference's true pixels, sharp, inside
the foreground silhouette only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import InvalidArgumentError, MissingOracleError
from ..imaging import BinaryMask, PlacementBox, RasterImage, resample, resample_mask
from .base import (
    Compositor,
    Refiner,
    Segmenter,
    SidecarAlpha,
    Stage1Result,
    key_reference,
    tight_bbox,
)

__all__ = ["MockCompositor", "OracleSegmenter", "HeuristicSegmenter", "MockRefiner"]

BOX_FILL_RATIO = 0.9  # fraction of the box the pasted foreground occupies
STAGE1_BLUR_RADIUS = 2  # box-blur radius simulating stage-1 detail loss
FILL_NOISE_AMPLITUDE = 3  # seeded noise on the hallucinated interior


def _crop_to_foreground(reference: RasterImage) -> tuple[np.ndarray, BinaryMask]:
    """Keyed reference cropped to its foreground bounding box: (rgb, mask)."""
    fg = key_reference(reference)
    bb = tight_bbox(fg)
    rgb = reference.pixels[bb.y : bb.y + bb.h, bb.x : bb.x + bb.w, :3]
    mask = BinaryMask(bits=fg.bits[bb.y : bb.y + bb.h, bb.x : bb.x + bb.w].copy())
    return rgb, mask


def _fit_dims(src_w: int, src_h: int, max_w: int, max_h: int) -> tuple[int, int]:
    scale = min(max_w / src_w, max_h / src_h)
    return max(1, round(src_w * scale)), max(1, round(src_h * scale))


def _fill_dims(src_w: int, src_h: int, want_w: int, want_h: int) -> tuple[int, int]:
    scale = max(want_w / src_w, want_h / src_h)
    return max(want_w, round(src_w * scale)), max(want_h, round(src_h * scale))


def _edge_line(px: np.ndarray, side: str, box: PlacementBox):
    """Border line of pixels just outside one side of the box, or None."""
    h, w = px.shape[:2]
    if side == "top":
        return px[box.y - 1, box.x : box.x + box.w] if box.y > 0 else None
    if side == "bottom":
        return px[box.y + box.h, box.x : box.x + box.w] if box.y + box.h < h else None
    if side == "left":
        return px[box.y : box.y + box.h, box.x - 1] if box.x > 0 else None
    return px[box.y : box.y + box.h, box.x + box.w] if box.x + box.w < w else None


def _paired_lines(a, b, length: int, channels: int):
    # Substitute a missing side with its opposite; mid-gray when both missing.
    if a is None and b is None:
        gray = np.full((length, channels), 128.0)
        return gray, gray.copy()
    if a is None:
        a = b
    if b is None:
        b = a
    return a.astype(np.float64), b.astype(np.float64)


def hallucinate_interior(masked_bg: RasterImage, box: PlacementBox, seed: int) -> np.ndarray:
    """Plausible background for the erased box interior.

    Separable linear interpolation between the four border lines just
    outside the box, plus low-amplitude seeded noise so different seeds
    yield visibly different hallucinations.
    """
    px = masked_bg.pixels
    c = masked_bg.channels
    top, bottom = _paired_lines(
        _edge_line(px, "top", box), _edge_line(px, "bottom", box), box.w, c
    )
    left, right = _paired_lines(
        _edge_line(px, "left", box), _edge_line(px, "right", box), box.h, c
    )
    tv = ((np.arange(box.h) + 1) / (box.h + 1))[:, None, None]
    th = ((np.arange(box.w) + 1) / (box.w + 1))[None, :, None]
    vfill = top[None, :, :] * (1 - tv) + bottom[None, :, :] * tv
    hfill = left[:, None, :] * (1 - th) + right[:, None, :] * th
    fill = (vfill + hfill) / 2.0
    rng = np.random.default_rng(seed)
    noise = rng.integers(-FILL_NOISE_AMPLITUDE, FILL_NOISE_AMPLITUDE + 1, size=fill.shape)
    return np.clip(np.rint(fill + noise), 0, 255).astype(np.uint8)


def box_blur(rgb: np.ndarray, radius: int) -> np.ndarray:
    """Mean filter with a (2r+1) square window, edge-clamped."""
    size = 2 * radius + 1
    blurred = ndimage.uniform_filter(
        rgb.astype(np.float64), size=(size, size, 1), mode="nearest"
    )
    return np.clip(np.rint(blurred), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class MockCompositor(Compositor):
    """Procedural stage-1 stand-in; deterministic given (inputs, seed)."""

    seed: int | None = None  # pins the seed regardless of the job seed

    def compose(
        self, masked_bg: RasterImage, box_mask: BinaryMask, reference: RasterImage, seed: int
    ) -> Stage1Result:
        box_mask.require_same_shape(masked_bg)
        if box_mask.popcount == 0:
            raise InvalidArgumentError("box mask is empty")
        eff_seed = self.seed if self.seed is not None else seed
        box = tight_bbox(box_mask)

        out = np.array(masked_bg.pixels)
        out[box.y : box.y + box.h, box.x : box.x + box.w] = hallucinate_interior(
            masked_bg, box, eff_seed
        )

        ref_rgb, ref_mask = _crop_to_foreground(reference)
        fit_w, fit_h = _fit_dims(
            ref_mask.width,
            ref_mask.height,
            max(1, round(box.w * BOX_FILL_RATIO)),
            max(1, round(box.h * BOX_FILL_RATIO)),
        )
        patch = resample(RasterImage.from_array(ref_rgb), fit_w, fit_h, "bilinear").pixels
        patch_mask = resample_mask(ref_mask, fit_w, fit_h).bits
        patch = box_blur(patch, STAGE1_BLUR_RADIUS)

        x0 = box.x + (box.w - fit_w) // 2
        y0 = box.y + (box.h - fit_h) // 2
        region = out[y0 : y0 + fit_h, x0 : x0 + fit_w]
        inside = patch_mask == 1
        region[..., :3][inside] = patch[inside]
        if out.shape[2] == 4:
            region[..., 3][inside] = 255

        footprint = np.zeros((masked_bg.height, masked_bg.width), dtype=np.uint8)
        footprint[y0 : y0 + fit_h, x0 : x0 + fit_w] = patch_mask
        return Stage1Result(
            image=RasterImage(pixels=out),
            sidecar=SidecarAlpha(mask=BinaryMask(bits=footprint)),
        )


@dataclass(frozen=True)
class OracleSegmenter(Segmenter):
    """Returns the mock compositor's sidecar footprint verbatim."""

    def segment(
        self, image: RasterImage, box: PlacementBox, sidecar: SidecarAlpha | None = None
    ) -> BinaryMask:
        box.validate_within(image.width, image.height)
        if sidecar is None:
            raise MissingOracleError("oracle segmenter requires a sidecar alpha for this job")
        sidecar.mask.require_same_shape(image, what="sidecar alpha")
        return sidecar.mask


@dataclass(frozen=True)
class HeuristicSegmenter(Segmenter):
    """Offline color-model fallback.

    Samples the 2-pixel band just outside the box as a background color
    model, then marks interior pixels whose RGB distance to the nearest
    band sample exceeds the threshold. Output is confined to the box
    interior by construction.
    """

    threshold: float = 30.0

    def segment(
        self, image: RasterImage, box: PlacementBox, sidecar: SidecarAlpha | None = None
    ) -> BinaryMask:
        box.validate_within(image.width, image.height)
        bits = np.zeros((image.height, image.width), dtype=np.uint8)
        band = self._band_colors(image, box)
        if band.size == 0:
            return BinaryMask(bits=bits)

        interior = image.pixels[box.y : box.y + box.h, box.x : box.x + box.w, :3]
        flat = interior.reshape(-1, 3).astype(np.float64)
        marked = np.zeros(flat.shape[0], dtype=bool)
        thr_sq = float(self.threshold) ** 2
        chunk = 4096  # bounds the (pixels x band) distance matrix
        for start in range(0, flat.shape[0], chunk):
            part = flat[start : start + chunk]
            d_sq = ((part[:, None, :] - band[None, :, :]) ** 2).sum(axis=2).min(axis=1)
            marked[start : start + chunk] = d_sq > thr_sq
        bits[box.y : box.y + box.h, box.x : box.x + box.w] = (
            marked.reshape(box.h, box.w).astype(np.uint8)
        )
        return BinaryMask(bits=bits)

    @staticmethod
    def _band_colors(image: RasterImage, box: PlacementBox) -> np.ndarray:
        h, w = image.height, image.width
        ring = np.zeros((h, w), dtype=bool)
        y0, y1 = max(0, box.y - 2), min(h, box.y + box.h + 2)
        x0, x1 = max(0, box.x - 2), min(w, box.x + box.w + 2)
        ring[y0:y1, x0:x1] = True
        ring[box.y : box.y + box.h, box.x : box.x + box.w] = False
        colors = image.pixels[:, :, :3][ring].astype(np.float64)
        if colors.size == 0:
            return colors.reshape(0, 3)
        return np.unique(colors, axis=0)


@dataclass(frozen=True)
class MockRefiner(Refiner):
    """Writes the reference's true pixels, sharp, inside the silhouette only."""

    seed: int | None = None  # accepted for profile symmetry; output is seed-free

    def refine(
        self, masked_bg2: RasterImage, fg_mask: BinaryMask, reference: RasterImage, seed: int
    ) -> RasterImage:
        fg_mask.require_same_shape(masked_bg2)
        if fg_mask.popcount == 0:
            raise InvalidArgumentError("foreground mask is empty")
        rect = tight_bbox(fg_mask)

        ref_rgb, ref_mask = _crop_to_foreground(reference)
        big_w, big_h = _fill_dims(ref_mask.width, ref_mask.height, rect.w, rect.h)
        scaled = resample(RasterImage.from_array(ref_rgb), big_w, big_h, "nearest").pixels
        cx = (big_w - rect.w) // 2
        cy = (big_h - rect.h) // 2
        patch = scaled[cy : cy + rect.h, cx : cx + rect.w]

        out = np.array(masked_bg2.pixels)
        region = out[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w]
        inside = fg_mask.bits[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w] == 1
        region[..., :3][inside] = patch[inside]
        if out.shape[2] == 4:
            region[..., 3][inside] = 255
        return RasterImage(pixels=out)
