"""Mask construction, region erasure, and enforced background compositing.

Everything here is a pure function over immutable values. Erasure writes
literal zeros (all channels, alpha included) inside the mask; compositing
is a hard per-pixel select with no feathering, so the output restricted to
the mask complement is bit-identical to the background input.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyMaskError, InvalidArgumentError
from .imaging import BinaryMask, PlacementBox, RasterImage, connected_components, dilate, fill_holes

__all__ = [
    "rasterize_box",
    "erase",
    "composite_preserving_background",
    "refine_mask",
    "REFINE_POLICIES",
]

REFINE_POLICIES = ("largest_component", "union")


def rasterize_box(box: PlacementBox, width: int, height: int) -> BinaryMask:
    """Binary mask with exactly the box interior set to 1."""
    box.validate_within(width, height)
    bits = np.zeros((height, width), dtype=np.uint8)
    bits[box.y : box.y + box.h, box.x : box.x + box.w] = 1
    return BinaryMask(bits=bits)


def erase(img: RasterImage, mask: BinaryMask) -> RasterImage:
    """Zero all channels where mask = 1; keep the image where mask = 0."""
    mask.require_same_shape(img)
    keep = (mask.bits == 0)[:, :, None]
    return RasterImage(pixels=np.where(keep, img.pixels, np.uint8(0)))


def composite_preserving_background(
    candidate: RasterImage, background: RasterImage, mask: BinaryMask
) -> RasterImage:
    """Take candidate pixels where mask = 1, background pixels elsewhere."""
    mask.require_same_shape(background)
    mask.require_same_shape(candidate, what="candidate mask")
    if candidate.channels != background.channels:
        raise InvalidArgumentError(
            f"candidate has {candidate.channels} channels, background {background.channels}"
        )
    inside = (mask.bits == 1)[:, :, None]
    return RasterImage(pixels=np.where(inside, candidate.pixels, background.pixels))


def refine_mask(
    raw: BinaryMask,
    box: PlacementBox,
    margin: int = 8,
    policy: str = "largest_component",
) -> BinaryMask:
    """Turn a raw segmenter mask into a clean foreground silhouette.

    Steps, in order: clip to the margin-dilated box, keep the largest
    8-connected component (or the union of all, per policy), fill holes.
    The result is always a subset of the margin-dilated box.
    """
    if margin < 0:
        raise InvalidArgumentError(f"margin must be >= 0, got {margin}")
    if policy not in REFINE_POLICIES:
        raise InvalidArgumentError(f"policy must be one of {REFINE_POLICIES}, got {policy!r}")
    box.validate_within(raw.width, raw.height)

    allowed = dilate(rasterize_box(box, raw.width, raw.height), margin)
    clipped = BinaryMask(bits=raw.bits & allowed.bits)
    if clipped.popcount == 0:
        raise EmptyMaskError(raw_popcount=raw.popcount)

    if policy == "largest_component":
        labeling = connected_components(clipped, connectivity=8)
        clipped = labeling.mask_of(labeling.components[0].label)

    return fill_holes(clipped)
