"""Backend contracts and the profile describing which implementation to use.

The pipeline reaches the stage-1 compositor, the segmenter, and the
stage-2 refiner only through these contracts, so deterministic procedural
mocks, an oracle/heuristic segmenter, and remote wire clients are all
interchangeable per profile.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace

import numpy as np

from ..errors import EmptyReferenceError, InvalidArgumentError
from ..imaging import BinaryMask, PlacementBox, RasterImage
from ..masking import REFINE_POLICIES

__all__ = [
    "SidecarAlpha",
    "Stage1Result",
    "Compositor",
    "Segmenter",
    "Refiner",
    "BackendSpec",
    "BackendProfile",
    "key_reference",
    "tight_bbox",
]

_COMPOSITOR_KINDS = ("wire", "mock")
_SEGMENTER_KINDS = ("wire", "mock", "oracle", "heuristic")
_REFINER_KINDS = ("wire", "mock")


@dataclass(frozen=True)
class SidecarAlpha:
    """Ground-truth foreground footprint emitted by the mock compositor.

    Enables an exact oracle segmenter in test profiles; never produced by
    wire backends.
    """

    mask: BinaryMask


@dataclass(frozen=True)
class Stage1Result:
    image: RasterImage
    sidecar: SidecarAlpha | None = None


class Compositor(ABC):
    """Stage-1 contract: fill the erased box with a scene-compatible foreground."""

    @abstractmethod
    def compose(
        self, masked_bg: RasterImage, box_mask: BinaryMask, reference: RasterImage, seed: int
    ) -> Stage1Result: ...


class Segmenter(ABC):
    """Extract the raw foreground silhouette from a stage-1 composite, box-prompted."""

    @abstractmethod
    def segment(
        self, image: RasterImage, box: PlacementBox, sidecar: SidecarAlpha | None = None
    ) -> BinaryMask: ...


class Refiner(ABC):
    """Stage-2 contract: fill the silhouette with the reference's true details."""

    @abstractmethod
    def refine(
        self, masked_bg2: RasterImage, fg_mask: BinaryMask, reference: RasterImage, seed: int
    ) -> RasterImage: ...


@dataclass(frozen=True)
class BackendSpec:
    """Selector for one backend slot: implementation kind plus its knobs."""

    kind: str
    endpoint: str | None = None  # wire only
    seed: int | None = None  # mock only; overrides the job seed when set
    threshold: float = 30.0  # heuristic segmenter color-distance cutoff

    def require_kind(self, allowed: tuple[str, ...], slot: str) -> None:
        if self.kind not in allowed:
            raise InvalidArgumentError(f"{slot} backend kind must be one of {allowed}, got {self.kind!r}")
        if self.kind == "wire" and not self.endpoint:
            raise InvalidArgumentError(f"{slot} wire backend needs an endpoint URL")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.endpoint is not None:
            out["endpoint"] = self.endpoint
        if self.seed is not None:
            out["seed"] = self.seed
        if self.threshold != 30.0:
            out["threshold"] = self.threshold
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "BackendSpec":
        return cls(
            kind=data["kind"],
            endpoint=data.get("endpoint"),
            seed=data.get("seed"),
            threshold=float(data.get("threshold", 30.0)),
        )


@dataclass(frozen=True)
class BackendProfile:
    """Complete backend selection for a job, plus shared wire/refinement knobs."""

    name: str
    compositor: BackendSpec
    segmenter: BackendSpec
    refiner: BackendSpec
    request_timeout: float = 30.0
    max_side: int = 1024
    refine_margin: int = 8
    refine_policy: str = "largest_component"

    def __post_init__(self):
        self.compositor.require_kind(_COMPOSITOR_KINDS, "compositor")
        self.segmenter.require_kind(_SEGMENTER_KINDS, "segmenter")
        self.refiner.require_kind(_REFINER_KINDS, "refiner")
        if self.request_timeout <= 0:
            raise InvalidArgumentError(f"request_timeout must be > 0, got {self.request_timeout}")
        if self.max_side < 64:
            raise InvalidArgumentError(f"max_side must be >= 64, got {self.max_side}")
        if self.refine_margin < 0:
            raise InvalidArgumentError(f"refine_margin must be >= 0, got {self.refine_margin}")
        if self.refine_policy not in REFINE_POLICIES:
            raise InvalidArgumentError(f"refine_policy must be one of {REFINE_POLICIES}")

    def with_name(self, name: str) -> "BackendProfile":
        return replace(self, name=name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "compositor": self.compositor.to_dict(),
            "segmenter": self.segmenter.to_dict(),
            "refiner": self.refiner.to_dict(),
            "request_timeout": self.request_timeout,
            "max_side": self.max_side,
            "refine_margin": self.refine_margin,
            "refine_policy": self.refine_policy,
        }

    @classmethod
    def from_dict(cls, data: dict, name: str | None = None) -> "BackendProfile":
        return cls(
            name=name or data.get("name", "unnamed"),
            compositor=BackendSpec.from_dict(data["compositor"]),
            segmenter=BackendSpec.from_dict(data["segmenter"]),
            refiner=BackendSpec.from_dict(data["refiner"]),
            request_timeout=float(data.get("request_timeout", 30.0)),
            max_side=int(data.get("max_side", 1024)),
            refine_margin=int(data.get("refine_margin", 8)),
            refine_policy=data.get("refine_policy", "largest_component"),
        )


def key_reference(reference: RasterImage) -> BinaryMask:
    """Foreground silhouette of a reference image.

    RGBA references use the alpha channel (>= 128 is foreground); RGB
    references are keyed against a near-white backdrop: a pixel is
    background when all channels are >= 250.
    """
    if reference.channels == 4:
        fg = reference.pixels[:, :, 3] >= 128
    else:
        fg = ~(reference.pixels >= 250).all(axis=2)
    mask = BinaryMask(bits=fg.astype(np.uint8))
    if mask.popcount == 0:
        raise EmptyReferenceError("reference has no foreground pixels after keying")
    return mask


def tight_bbox(mask: BinaryMask) -> PlacementBox:
    """Smallest box containing all 1-pixels; raises on an empty mask."""
    ys, xs = np.nonzero(mask.bits)
    if ys.size == 0:
        raise InvalidArgumentError("cannot take the bounding box of an empty mask")
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return PlacementBox(x=x0, y=y0, w=x1 - x0 + 1, h=y1 - y0 + 1)
