"""Pixel-level value types and raster/morphology primitives.

All values are immutable after construction: the wrapped numpy arrays are
marked non-writeable and every operation returns a new value. This makes
them safe to share across concurrent tasks without synchronization.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DimensionMismatchError, InvalidArgumentError

__all__ = [
    "RasterImage",
    "BinaryMask",
    "PlacementBox",
    "Component",
    "ComponentLabeling",
    "resample",
    "connected_components",
    "fill_holes",
    "dilate",
    "load_image_png",
    "load_mask_png",
]

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RasterImage:
    """H x W x C grid of 8-bit samples, C in {3 (RGB), 4 (RGBA)}."""

    pixels: np.ndarray  # (H, W, C) uint8, non-writeable

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] not in (3, 4):
            raise InvalidArgumentError(f"expected (H, W, 3|4) pixel array, got shape {px.shape}")
        if px.dtype != np.uint8:
            raise InvalidArgumentError(f"expected uint8 pixels, got {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidArgumentError("image must be at least 1x1")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "RasterImage":
        return cls(pixels=np.asarray(arr, dtype=np.uint8))

    @classmethod
    def solid(cls, width: int, height: int, color) -> "RasterImage":
        color = np.asarray(color, dtype=np.uint8)
        if color.ndim != 1 or color.size not in (3, 4):
            raise InvalidArgumentError("color must have 3 or 4 components")
        return cls(pixels=np.broadcast_to(color, (height, width, color.size)).copy())

    def rgb(self) -> "RasterImage":
        """Drop the alpha channel if present."""
        if self.channels == 3:
            return self
        return RasterImage(pixels=self.pixels[:, :, :3].copy())

    def with_channels(self, channels: int) -> "RasterImage":
        """Coerce to 3 or 4 channels (new alpha is fully opaque)."""
        if channels not in (3, 4):
            raise InvalidArgumentError(f"channels must be 3 or 4, got {channels}")
        if channels == self.channels:
            return self
        if channels == 3:
            return self.rgb()
        alpha = np.full((self.height, self.width, 1), 255, dtype=np.uint8)
        return RasterImage(pixels=np.concatenate([self.pixels, alpha], axis=2))

    def to_png_bytes(self) -> bytes:
        mode = "RGB" if self.channels == 3 else "RGBA"
        buf = io.BytesIO()
        Image.fromarray(np.asarray(self.pixels), mode=mode).save(buf, format="PNG")
        return buf.getvalue()

    def save_png(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_png_bytes())


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """H x W grid of {0, 1} values."""

    bits: np.ndarray  # (H, W) uint8 in {0, 1}, non-writeable

    def __post_init__(self):
        bits = self.bits
        if bits.ndim != 2:
            raise InvalidArgumentError(f"expected (H, W) mask array, got shape {bits.shape}")
        if bits.shape[0] < 1 or bits.shape[1] < 1:
            raise InvalidArgumentError("mask must be at least 1x1")
        bits = np.asarray(bits, dtype=np.uint8)
        if not np.isin(bits, (0, 1)).all():
            raise InvalidArgumentError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "bits", _frozen(bits))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def popcount(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "BinaryMask":
        return cls(bits=(np.asarray(arr) != 0).astype(np.uint8))

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(bits=np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def ones(cls, width: int, height: int) -> "BinaryMask":
        return cls(bits=np.ones((height, width), dtype=np.uint8))

    def require_same_shape(self, other: "BinaryMask | RasterImage", what: str = "mask") -> None:
        ow, oh = other.width, other.height
        if (self.width, self.height) != (ow, oh):
            raise DimensionMismatchError(
                f"{what} is {self.width}x{self.height}, expected {ow}x{oh}"
            )

    def to_png_bytes(self) -> bytes:
        # Persisted as 8-bit grayscale with values {0, 255}.
        buf = io.BytesIO()
        Image.fromarray(np.asarray(self.bits) * np.uint8(255), mode="L").save(buf, format="PNG")
        return buf.getvalue()

    def save_png(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_png_bytes())


@dataclass(frozen=True)
class PlacementBox:
    """Axis-aligned box covering pixels [x, x+w) x [y, y+h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise InvalidArgumentError(f"box must be at least 1x1, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise InvalidArgumentError(f"box origin must be non-negative, got ({self.x}, {self.y})")

    def validate_within(self, width: int, height: int) -> None:
        if self.x + self.w > width or self.y + self.h > height:
            raise InvalidArgumentError(
                f"box ({self.x},{self.y},{self.w},{self.h}) exceeds {width}x{height} frame"
            )

    @classmethod
    def parse(cls, text: str) -> "PlacementBox":
        parts = text.split(",")
        if len(parts) != 4:
            raise InvalidArgumentError(f"box must be 'x,y,w,h', got {text!r}")
        try:
            x, y, w, h = (int(p.strip()) for p in parts)
        except ValueError:
            raise InvalidArgumentError(f"box components must be integers, got {text!r}") from None
        return cls(x, y, w, h)

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class Component:
    label: int
    pixel_count: int


@dataclass(frozen=True, eq=False)
class ComponentLabeling:
    """Result of connected-component labeling.

    ``labels`` assigns each 1-pixel a positive label (0 = background);
    ``components`` lists (label, pixel count) sorted by descending count,
    ties broken by ascending label.
    """

    labels: np.ndarray
    components: tuple[Component, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", _frozen(self.labels))

    def mask_of(self, label: int) -> BinaryMask:
        return BinaryMask.from_array(self.labels == label)


def resample(img: RasterImage, new_w: int, new_h: int, filter: str = "bilinear") -> RasterImage:
    """Resize to new_w x new_h with nearest or bilinear filtering.

    Sampling is pixel-center aligned: destination pixel (i, j) reads source
    coordinate ((j + 0.5) * W/new_w - 0.5, (i + 0.5) * H/new_h - 0.5), so
    resampling to the own size with the nearest filter is the identity.
    """
    if new_w < 1 or new_h < 1:
        raise InvalidArgumentError(f"target dimensions must be >= 1, got {new_w}x{new_h}")
    if filter not in ("nearest", "bilinear"):
        raise InvalidArgumentError(f"unknown filter {filter!r}")
    h, w = img.height, img.width
    if filter == "nearest":
        ys = np.minimum((np.arange(new_h) + 0.5) * h / new_h, h - 1).astype(np.intp)
        xs = np.minimum((np.arange(new_w) + 0.5) * w / new_w, w - 1).astype(np.intp)
        out = img.pixels[ys[:, None], xs[None, :]]
        return RasterImage(pixels=out.copy())

    yf = np.clip((np.arange(new_h) + 0.5) * h / new_h - 0.5, 0.0, h - 1)
    xf = np.clip((np.arange(new_w) + 0.5) * w / new_w - 0.5, 0.0, w - 1)
    y0 = np.floor(yf).astype(np.intp)
    x0 = np.floor(xf).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (yf - y0)[:, None, None]
    wx = (xf - x0)[None, :, None]
    px = img.pixels.astype(np.float64)
    top = px[y0[:, None], x0[None, :]] * (1 - wx) + px[y0[:, None], x1[None, :]] * wx
    bot = px[y1[:, None], x0[None, :]] * (1 - wx) + px[y1[:, None], x1[None, :]] * wx
    out = top * (1 - wy) + bot * wy
    return RasterImage(pixels=np.clip(np.rint(out), 0, 255).astype(np.uint8))


def resample_mask(mask: BinaryMask, new_w: int, new_h: int) -> BinaryMask:
    """Nearest-neighbor mask resize (keeps values binary)."""
    if new_w < 1 or new_h < 1:
        raise InvalidArgumentError(f"target dimensions must be >= 1, got {new_w}x{new_h}")
    h, w = mask.height, mask.width
    ys = np.minimum((np.arange(new_h) + 0.5) * h / new_h, h - 1).astype(np.intp)
    xs = np.minimum((np.arange(new_w) + 0.5) * w / new_w, w - 1).astype(np.intp)
    return BinaryMask(bits=mask.bits[ys[:, None], xs[None, :]].copy())


def connected_components(mask: BinaryMask, connectivity: int = 8) -> ComponentLabeling:
    """Label connected 1-regions; components ordered by descending size."""
    if connectivity not in (4, 8):
        raise InvalidArgumentError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = _STRUCT_4 if connectivity == 4 else _STRUCT_8
    labels, n = ndimage.label(mask.bits, structure=structure)
    counts = np.bincount(labels.ravel(), minlength=n + 1)
    comps = sorted(
        (Component(label=i, pixel_count=int(counts[i])) for i in range(1, n + 1)),
        key=lambda c: (-c.pixel_count, c.label),
    )
    return ComponentLabeling(labels=labels.astype(np.int32), components=tuple(comps))


def fill_holes(mask: BinaryMask) -> BinaryMask:
    """Set to 1 every 0-region not 4-connected to the mask border."""
    filled = ndimage.binary_fill_holes(mask.bits, structure=_STRUCT_4)
    return BinaryMask(bits=filled.astype(np.uint8))


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """Grow the 1-set to its Chebyshev-distance <= radius neighborhood."""
    if radius < 0:
        raise InvalidArgumentError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return mask
    size = 2 * radius + 1
    grown = ndimage.maximum_filter(mask.bits, size=size, mode="constant", cval=0)
    return BinaryMask(bits=grown)


def load_image_png(source: str | Path | bytes) -> RasterImage:
    """Decode a PNG (or other PIL-readable) file into an RGB(A) raster."""
    if isinstance(source, bytes):
        im = Image.open(io.BytesIO(source))
    else:
        im = Image.open(source)
    if im.mode not in ("RGB", "RGBA"):
        im = im.convert("RGBA" if "A" in im.getbands() or im.mode == "P" else "RGB")
    return RasterImage(pixels=np.asarray(im, dtype=np.uint8))


def load_mask_png(source: str | Path | bytes) -> BinaryMask:
    """Decode a grayscale PNG into a binary mask (>= 128 reads as 1)."""
    if isinstance(source, bytes):
        im = Image.open(io.BytesIO(source))
    else:
        im = Image.open(source)
    arr = np.asarray(im.convert("L"), dtype=np.uint8)
    return BinaryMask(bits=(arr >= 128).astype(np.uint8))
