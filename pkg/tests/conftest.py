from __future__ import annotations

import numpy as np
import pytest

from insertkit.imaging import BinaryMask, RasterImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng: np.random.Generator, width: int, height: int, channels: int = 3) -> RasterImage:
    return RasterImage(pixels=rng.integers(0, 256, size=(height, width, channels), dtype=np.uint8))


def random_mask(rng: np.random.Generator, width: int, height: int, density: float = 0.5) -> BinaryMask:
    return BinaryMask(bits=(rng.random((height, width)) < density).astype(np.uint8))
