"""HTTP clients for remote compose/segment/refine services.

Request bodies are multipart: one PNG part per image plus a JSON "meta"
part carrying {box: [x, y, w, h], seed}. Responses are PNG. Every call
gets one retry with exponential backoff; inputs larger than the profile's
max_side are downscaled before sending and the response is resampled back,
so the dimension contracts seen by the pipeline always hold.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import requests

from ..errors import BackendUnavailableError
from ..imaging import (
    BinaryMask,
    PlacementBox,
    RasterImage,
    load_image_png,
    load_mask_png,
    resample,
    resample_mask,
)
from .base import Compositor, Refiner, Segmenter, SidecarAlpha, Stage1Result, tight_bbox

__all__ = ["WireClient", "WireCompositor", "WireSegmenter", "WireRefiner"]

RETRY_BASE_S = 0.5
MAX_ATTEMPTS = 2  # one initial attempt plus a single retry


@dataclass(frozen=True)
class WireClient:
    endpoint: str
    timeout: float = 30.0
    max_side: int = 1024
    retry_base_s: float = RETRY_BASE_S

    def post(self, path: str, parts: dict[str, bytes], meta: dict) -> bytes:
        url = self.endpoint.rstrip("/") + path
        files = {name: (f"{name}.png", data, "image/png") for name, data in parts.items()}
        files["meta"] = ("meta.json", json.dumps(meta).encode(), "application/json")
        last_error: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            try:
                resp = requests.post(url, files=files, timeout=self.timeout)
                if resp.status_code == 200:
                    return resp.content
                last_error = BackendUnavailableError(
                    f"{url} returned status {resp.status_code}"
                )
            except requests.RequestException as exc:
                last_error = BackendUnavailableError(f"{url} unreachable: {exc}")
            if attempt + 1 < MAX_ATTEMPTS:
                time.sleep(self.retry_base_s * (2**attempt))
        raise last_error  # type: ignore[misc]

    def shrink_factor(self, width: int, height: int) -> float:
        longest = max(width, height)
        return 1.0 if longest <= self.max_side else self.max_side / longest

    @staticmethod
    def scale_dims(width: int, height: int, factor: float) -> tuple[int, int]:
        return max(1, round(width * factor)), max(1, round(height * factor))

    @staticmethod
    def scale_box(box: PlacementBox, factor: float, width: int, height: int) -> PlacementBox:
        x = min(max(0, round(box.x * factor)), width - 1)
        y = min(max(0, round(box.y * factor)), height - 1)
        w = max(1, min(round(box.w * factor), width - x))
        h = max(1, min(round(box.h * factor), height - y))
        return PlacementBox(x, y, w, h)


@dataclass(frozen=True)
class WireCompositor(Compositor):
    client: WireClient

    def compose(
        self, masked_bg: RasterImage, box_mask: BinaryMask, reference: RasterImage, seed: int
    ) -> Stage1Result:
        box_mask.require_same_shape(masked_bg)
        w, h = masked_bg.width, masked_bg.height
        factor = self.client.shrink_factor(w, h)
        send_bg, send_mask, box = masked_bg, box_mask, tight_bbox(box_mask)
        if factor < 1.0:
            sw, sh = self.client.scale_dims(w, h, factor)
            send_bg = resample(masked_bg, sw, sh, "bilinear")
            send_mask = resample_mask(box_mask, sw, sh)
            box = self.client.scale_box(box, factor, sw, sh)
        payload = self.client.post(
            "/v1/compose",
            {
                "masked_bg": send_bg.to_png_bytes(),
                "box_mask": send_mask.to_png_bytes(),
                "reference": reference.to_png_bytes(),
            },
            {"box": box.as_list(), "seed": seed},
        )
        image = load_image_png(payload)
        if (image.width, image.height) != (w, h):
            image = resample(image, w, h, "bilinear")
        return Stage1Result(image=image, sidecar=None)


@dataclass(frozen=True)
class WireSegmenter(Segmenter):
    client: WireClient

    def segment(
        self, image: RasterImage, box: PlacementBox, sidecar: SidecarAlpha | None = None
    ) -> BinaryMask:
        box.validate_within(image.width, image.height)
        w, h = image.width, image.height
        factor = self.client.shrink_factor(w, h)
        send_img, send_box = image, box
        if factor < 1.0:
            sw, sh = self.client.scale_dims(w, h, factor)
            send_img = resample(image, sw, sh, "bilinear")
            send_box = self.client.scale_box(box, factor, sw, sh)
        payload = self.client.post(
            "/v1/segment",
            {"image": send_img.to_png_bytes()},
            {"box": send_box.as_list(), "seed": 0},
        )
        mask = load_mask_png(payload)
        if (mask.width, mask.height) != (w, h):
            mask = resample_mask(mask, w, h)
        return mask


@dataclass(frozen=True)
class WireRefiner(Refiner):
    client: WireClient

    def refine(
        self, masked_bg2: RasterImage, fg_mask: BinaryMask, reference: RasterImage, seed: int
    ) -> RasterImage:
        fg_mask.require_same_shape(masked_bg2)
        w, h = masked_bg2.width, masked_bg2.height
        factor = self.client.shrink_factor(w, h)
        send_bg, send_mask = masked_bg2, fg_mask
        box = tight_bbox(fg_mask)
        if factor < 1.0:
            sw, sh = self.client.scale_dims(w, h, factor)
            send_bg = resample(masked_bg2, sw, sh, "bilinear")
            send_mask = resample_mask(fg_mask, sw, sh)
            box = self.client.scale_box(box, factor, sw, sh)
        payload = self.client.post(
            "/v1/refine",
            {
                "masked_bg": send_bg.to_png_bytes(),
                "fg_mask": send_mask.to_png_bytes(),
                "reference": reference.to_png_bytes(),
            },
            {"box": box.as_list(), "seed": seed},
        )
        image = load_image_png(payload)
        if (image.width, image.height) != (w, h):
            image = resample(image, w, h, "bilinear")
        return image
