from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from insertkit.errors import DimensionMismatchError, EmptyMaskError, InvalidArgumentError
from insertkit.imaging import BinaryMask, PlacementBox, RasterImage, dilate
from insertkit.masking import (
    composite_preserving_background,
    erase,
    rasterize_box,
    refine_mask,
)

from .conftest import random_image, random_mask


def erase_oracle(img: RasterImage, mask: BinaryMask) -> np.ndarray:
    """Literal per-pixel two-branch loop."""
    out = np.zeros_like(np.asarray(img.pixels))
    for y in range(img.height):
        for x in range(img.width):
            if mask.bits[y, x] == 0:
                out[y, x] = img.pixels[y, x]
    return out


def select_oracle(cand: RasterImage, bg: RasterImage, mask: BinaryMask) -> np.ndarray:
    out = np.zeros_like(np.asarray(bg.pixels))
    for y in range(bg.height):
        for x in range(bg.width):
            out[y, x] = cand.pixels[y, x] if mask.bits[y, x] == 1 else bg.pixels[y, x]
    return out


# -- rasterize_box ------------------------------------------------------------


def test_rasterize_full_frame():
    assert rasterize_box(PlacementBox(0, 0, 5, 4), 5, 4) == BinaryMask.ones(5, 4)


def test_rasterize_interior_box_membership():
    got = rasterize_box(PlacementBox(1, 1, 2, 2), 4, 4)
    # per-pixel membership loop oracle
    expected = np.zeros((4, 4), dtype=np.uint8)
    for y in range(4):
        for x in range(4):
            expected[y, x] = 1 if (1 <= x < 3 and 1 <= y < 3) else 0
    assert np.array_equal(got.bits, expected)
    assert got.popcount == 4


def test_rasterize_rejects_out_of_frame():
    with pytest.raises(InvalidArgumentError):
        rasterize_box(PlacementBox(3, 3, 2, 2), 4, 4)


def test_rasterize_popcount_on_random_boxes():
    r = np.random.default_rng(11)
    for _ in range(100):
        w, h = int(r.integers(4, 30)), int(r.integers(4, 30))
        bw, bh = int(r.integers(1, w + 1)), int(r.integers(1, h + 1))
        bx, by = int(r.integers(0, w - bw + 1)), int(r.integers(0, h - bh + 1))
        assert rasterize_box(PlacementBox(bx, by, bw, bh), w, h).popcount == bw * bh


# -- erase ---------------------------------------------------------------------


def test_erase_zero_mask_is_identity(rng):
    img = random_image(rng, 6, 6)
    assert erase(img, BinaryMask.zeros(6, 6)) == img


def test_erase_full_mask_is_black(rng):
    img = random_image(rng, 6, 6, channels=4)
    out = erase(img, BinaryMask.ones(6, 6))
    assert np.array_equal(out.pixels, np.zeros((6, 6, 4), dtype=np.uint8))


def test_erase_matches_two_branch_oracle(rng):
    img = random_image(rng, 8, 8)
    mask = random_mask(rng, 8, 8)
    assert np.array_equal(erase(img, mask).pixels, erase_oracle(img, mask))


def test_erase_rejects_dimension_mismatch(rng):
    with pytest.raises(DimensionMismatchError):
        erase(random_image(rng, 4, 4), BinaryMask.zeros(5, 4))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_erase_idempotent(seed):
    r = np.random.default_rng(seed)
    img = random_image(r, 9, 7)
    mask = random_mask(r, 9, 7)
    once = erase(img, mask)
    assert erase(once, mask) == once


# -- composite_preserving_background --------------------------------------------


def test_composite_trivial_masks(rng):
    cand = random_image(rng, 5, 5)
    bg = random_image(rng, 5, 5)
    assert composite_preserving_background(cand, bg, BinaryMask.zeros(5, 5)) == bg
    assert composite_preserving_background(cand, bg, BinaryMask.ones(5, 5)) == cand


def test_composite_matches_select_oracle(rng):
    cand = random_image(rng, 8, 8)
    bg = random_image(rng, 8, 8)
    mask = random_mask(rng, 8, 8)
    got = composite_preserving_background(cand, bg, mask)
    assert np.array_equal(got.pixels, select_oracle(cand, bg, mask))


def test_composite_rejects_mismatches(rng):
    with pytest.raises(DimensionMismatchError):
        composite_preserving_background(
            random_image(rng, 4, 4), random_image(rng, 5, 5), BinaryMask.zeros(5, 5)
        )
    with pytest.raises(InvalidArgumentError):
        composite_preserving_background(
            random_image(rng, 4, 4, channels=4), random_image(rng, 4, 4, channels=3),
            BinaryMask.zeros(4, 4),
        )


def test_erase_composite_duality():
    # both agree with the source image on the mask's 0-set
    r = np.random.default_rng(3)
    for _ in range(100):
        img = random_image(r, 8, 8)
        mask = random_mask(r, 8, 8)
        erased = erase(img, mask)
        composed = composite_preserving_background(random_image(r, 8, 8), img, mask)
        outside = mask.bits == 0
        assert np.array_equal(erased.pixels[outside], img.pixels[outside])
        assert np.array_equal(composed.pixels[outside], img.pixels[outside])


# -- refine_mask -----------------------------------------------------------------


def _box_mask(box: PlacementBox, w: int, h: int) -> BinaryMask:
    return rasterize_box(box, w, h)


def test_refine_exact_box_is_fixed_point():
    box = PlacementBox(2, 2, 4, 4)
    raw = _box_mask(box, 10, 10)
    assert refine_mask(raw, box, margin=0) == raw


def test_refine_strips_stray_pixel_outside_box():
    box = PlacementBox(2, 2, 4, 4)
    bits = np.array(_box_mask(box, 10, 10).bits)
    bits[9, 9] = 1  # far outside the box
    got = refine_mask(BinaryMask(bits=bits), box, margin=0)
    assert got == _box_mask(box, 10, 10)


def test_refine_keeps_largest_component():
    box = PlacementBox(0, 0, 10, 10)
    bits = np.zeros((10, 10), dtype=np.uint8)
    bits[1:4, 1:5] = 1  # 12 pixels
    bits[6:7, 2:7] = 1  # 5 pixels
    got = refine_mask(BinaryMask(bits=bits), box, margin=0, policy="largest_component")
    assert got.popcount == 12
    assert np.array_equal(got.bits[1:4, 1:5], np.ones((3, 4), dtype=np.uint8))


def test_refine_union_policy_keeps_all_components():
    box = PlacementBox(0, 0, 10, 10)
    bits = np.zeros((10, 10), dtype=np.uint8)
    bits[1:4, 1:5] = 1
    bits[6:7, 2:7] = 1
    got = refine_mask(BinaryMask(bits=bits), box, margin=0, policy="union")
    assert got.popcount == 17


def test_refine_fills_holes():
    box = PlacementBox(1, 1, 5, 5)
    bits = np.zeros((8, 8), dtype=np.uint8)
    bits[1:6, 1:6] = 1
    bits[3, 3] = 0
    got = refine_mask(BinaryMask(bits=bits), box, margin=0)
    assert got.bits[3, 3] == 1


def test_refine_empty_after_clip_raises_with_popcount():
    box = PlacementBox(1, 1, 3, 3)
    bits = np.zeros((12, 12), dtype=np.uint8)
    bits[9:11, 9:11] = 1  # entirely outside the margin-dilated box
    with pytest.raises(EmptyMaskError) as err:
        refine_mask(BinaryMask(bits=bits), box, margin=1)
    assert err.value.raw_popcount == 4


def test_refine_rejects_bad_arguments():
    box = PlacementBox(0, 0, 2, 2)
    with pytest.raises(InvalidArgumentError):
        refine_mask(BinaryMask.ones(4, 4), box, margin=-1)
    with pytest.raises(InvalidArgumentError):
        refine_mask(BinaryMask.ones(4, 4), box, policy="everything")


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), margin=st.integers(0, 3))
def test_refine_contained_and_idempotent(seed, margin):
    r = np.random.default_rng(seed)
    raw = random_mask(r, 16, 16, density=0.4)
    box = PlacementBox(4, 4, 8, 8)
    allowed = dilate(rasterize_box(box, 16, 16), margin)
    try:
        refined = refine_mask(raw, box, margin=margin)
    except EmptyMaskError:
        assert (np.asarray(raw.bits) & np.asarray(allowed.bits)).sum() == 0
        return
    assert np.all(refined.bits <= allowed.bits)
    assert refine_mask(refined, box, margin=margin) == refined
