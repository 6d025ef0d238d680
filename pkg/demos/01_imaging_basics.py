"""Tour of the pixel-level value types and morphology primitives.

Everything downstream is built from three immutable values: RGB(A)
rasters, {0,1} masks, and axis-aligned placement boxes. This script walks
through constructing them, erasing a region, refining a noisy mask, and
round-tripping PNG files.
"""

from pathlib import Path

import numpy as np

from insertkit.imaging import (
    BinaryMask,
    PlacementBox,
    RasterImage,
    connected_components,
    dilate,
    fill_holes,
    resample,
)
from insertkit.masking import composite_preserving_background, erase, rasterize_box, refine_mask

OUT = Path(__file__).parent / "output" / "01"
OUT.mkdir(parents=True, exist_ok=True)

# A little 64x64 gradient image.
gx = np.linspace(40, 215, 64, dtype=np.uint8)
pixels = np.stack([np.tile(gx, (64, 1))] * 3, axis=2)
image = RasterImage(pixels=pixels)
print(f"image: {image.width}x{image.height}, {image.channels} channels")

# Boxes are half-open [x, x+w) x [y, y+h) and validate against a frame.
box = PlacementBox(16, 16, 32, 24)
box.validate_within(image.width, image.height)
box_mask = rasterize_box(box, image.width, image.height)
print(f"box mask popcount = {box_mask.popcount} (= {box.w}x{box.h} = {box.w * box.h})")

# Erasure zeroes every channel inside the mask and touches nothing else.
masked = erase(image, box_mask)
interior = masked.pixels[box.y : box.y + box.h, box.x : box.x + box.w]
print(f"erased interior max value = {interior.max()} (always 0)")
masked.save_png(OUT / "masked.png")

# Hard select: candidate pixels inside the mask, background outside.
red = RasterImage.solid(64, 64, (200, 40, 40))
composed = composite_preserving_background(red, image, box_mask)
outside = box_mask.bits == 0
print("background untouched outside mask:", bool((composed.pixels[outside] == image.pixels[outside]).all()))

# Morphology: a noisy mask with a stray blob and a hole, cleaned up.
noisy = np.zeros((64, 64), dtype=np.uint8)
noisy[20:36, 20:44] = 1
noisy[26, 30] = 0          # hole
noisy[2:4, 58:60] = 1      # stray blob far outside the box
raw = BinaryMask(bits=noisy)

labeling = connected_components(raw, connectivity=8)
print("components before refinement:", [(c.label, c.pixel_count) for c in labeling.components])

refined = refine_mask(raw, box, margin=2, policy="largest_component")
print(f"refined popcount = {refined.popcount} (stray blob clipped, hole filled)")
print("hole filled:", refined.bits[26, 30] == 1)
print("still inside the dilated box:", bool(np.all(refined.bits <= dilate(box_mask, 2).bits)))
print("fill_holes is idempotent:", fill_holes(refined) == refined)

# Resampling: nearest to own size is the identity, bit for bit.
assert resample(image, 64, 64, "nearest") == image
thumb = resample(image, 16, 16, "bilinear")
thumb.save_png(OUT / "thumb.png")
print(f"wrote {OUT / 'masked.png'} and {OUT / 'thumb.png'}")
