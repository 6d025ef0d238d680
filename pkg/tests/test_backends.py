from __future__ import annotations

import io
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from PIL import Image

from insertkit.backends import (
    BackendProfile,
    BackendSpec,
    HeuristicSegmenter,
    MockCompositor,
    MockRefiner,
    OracleSegmenter,
    SidecarAlpha,
    WireClient,
    WireCompositor,
    WireRefiner,
    WireSegmenter,
    build_backends,
    key_reference,
    mock_profile,
    tight_bbox,
)
from insertkit.backends.mock import BOX_FILL_RATIO, FILL_NOISE_AMPLITUDE, STAGE1_BLUR_RADIUS
from insertkit.errors import (
    BackendUnavailableError,
    EmptyReferenceError,
    InvalidArgumentError,
    MissingOracleError,
)
from insertkit.imaging import BinaryMask, PlacementBox, RasterImage, resample, resample_mask
from insertkit.masking import erase, rasterize_box

from .conftest import random_image, random_mask


def solid_rgba(w: int, h: int, rgb, alpha: int = 255) -> RasterImage:
    px = np.zeros((h, w, 4), dtype=np.uint8)
    px[:, :, :3] = rgb
    px[:, :, 3] = alpha
    return RasterImage(pixels=px)


# ---------------------------------------------------------------------------
# reference keying
# ---------------------------------------------------------------------------


def test_key_reference_uses_alpha_channel():
    ref = solid_rgba(4, 4, (10, 10, 10))
    px = np.array(ref.pixels)
    px[0, 0, 3] = 0
    keyed = key_reference(RasterImage(pixels=px))
    assert keyed.popcount == 15
    assert keyed.bits[0, 0] == 0


def test_key_reference_near_white_keying():
    px = np.full((3, 3, 3), 255, dtype=np.uint8)
    px[1, 1] = (249, 255, 255)  # one channel below the cutoff -> foreground
    keyed = key_reference(RasterImage(pixels=px))
    assert keyed.popcount == 1
    assert keyed.bits[1, 1] == 1


def test_key_reference_empty_raises():
    with pytest.raises(EmptyReferenceError):
        key_reference(RasterImage.solid(3, 3, (255, 255, 255)))
    with pytest.raises(EmptyReferenceError):
        key_reference(solid_rgba(3, 3, (5, 5, 5), alpha=0))


def test_tight_bbox():
    bits = np.zeros((6, 8), dtype=np.uint8)
    bits[2:5, 3:7] = 1
    assert tight_bbox(BinaryMask(bits=bits)) == PlacementBox(3, 2, 4, 3)
    with pytest.raises(InvalidArgumentError):
        tight_bbox(BinaryMask.zeros(3, 3))


# ---------------------------------------------------------------------------
# mock compositor: spec example + scripted five-step replay
# ---------------------------------------------------------------------------


def scripted_stage1_oracle(
    masked_bg: RasterImage, box: PlacementBox, reference: RasterImage, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Straight-line replay of the documented mock steps."""
    h, w, c = masked_bg.height, masked_bg.width, masked_bg.channels
    px = masked_bg.pixels.astype(np.float64)
    out = np.array(masked_bg.pixels)

    # step 1: separable interpolation between the four border lines + seeded noise
    top = px[box.y - 1, box.x : box.x + box.w] if box.y > 0 else None
    bottom = px[box.y + box.h, box.x : box.x + box.w] if box.y + box.h < h else None
    left = px[box.y : box.y + box.h, box.x - 1] if box.x > 0 else None
    right = px[box.y : box.y + box.h, box.x + box.w] if box.x + box.w < w else None
    if top is None:
        top = bottom if bottom is not None else np.full((box.w, c), 128.0)
    if bottom is None:
        bottom = top
    if left is None:
        left = right if right is not None else np.full((box.h, c), 128.0)
    if right is None:
        right = left
    fill = np.zeros((box.h, box.w, c))
    for yi in range(box.h):
        tv = (yi + 1) / (box.h + 1)
        for xi in range(box.w):
            th = (xi + 1) / (box.w + 1)
            vfill = top[xi] * (1 - tv) + bottom[xi] * tv
            hfill = left[yi] * (1 - th) + right[yi] * th
            fill[yi, xi] = (vfill + hfill) / 2.0
    rng = np.random.default_rng(seed)
    noise = rng.integers(-FILL_NOISE_AMPLITUDE, FILL_NOISE_AMPLITUDE + 1, size=fill.shape)
    out[box.y : box.y + box.h, box.x : box.x + box.w] = np.clip(
        np.rint(fill + noise), 0, 255
    ).astype(np.uint8)

    # step 2: key + tight crop
    fg = key_reference(reference)
    bb = tight_bbox(fg)
    crop_rgb = reference.pixels[bb.y : bb.y + bb.h, bb.x : bb.x + bb.w, :3]
    crop_mask = BinaryMask(bits=fg.bits[bb.y : bb.y + bb.h, bb.x : bb.x + bb.w].copy())

    # step 3: aspect-fit into 90% of the box, centered
    max_w = max(1, round(box.w * BOX_FILL_RATIO))
    max_h = max(1, round(box.h * BOX_FILL_RATIO))
    scale = min(max_w / bb.w, max_h / bb.h)
    fit_w = max(1, round(bb.w * scale))
    fit_h = max(1, round(bb.h * scale))
    patch = resample(RasterImage.from_array(crop_rgb), fit_w, fit_h, "bilinear").pixels
    pmask = resample_mask(crop_mask, fit_w, fit_h).bits

    # step 4: 5x5 edge-clamped box blur of the patch
    r = STAGE1_BLUR_RADIUS
    blurred = np.zeros((fit_h, fit_w, 3))
    for y in range(fit_h):
        for x in range(fit_w):
            acc = np.zeros(3)
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy = min(max(y + dy, 0), fit_h - 1)
                    xx = min(max(x + dx, 0), fit_w - 1)
                    acc += patch[yy, xx]
            blurred[y, x] = acc / (2 * r + 1) ** 2
    blurred = np.clip(np.rint(blurred), 0, 255).astype(np.uint8)

    # step 5: paste, record the footprint
    x0 = box.x + (box.w - fit_w) // 2
    y0 = box.y + (box.h - fit_h) // 2
    footprint = np.zeros((h, w), dtype=np.uint8)
    for y in range(fit_h):
        for x in range(fit_w):
            if pmask[y, x]:
                out[y0 + y, x0 + x, :3] = blurred[y, x]
                if c == 4:
                    out[y0 + y, x0 + x, 3] = 255
                footprint[y0 + y, x0 + x] = 1
    return out, footprint


def spec_example_inputs():
    bg = RasterImage.solid(64, 64, (128, 128, 128))
    box = PlacementBox(22, 22, 20, 20)
    box_mask = rasterize_box(box, 64, 64)
    masked_bg = erase(bg, box_mask)
    reference = solid_rgba(10, 10, (255, 0, 0))
    return masked_bg, box_mask, box, reference


def test_mock_compose_matches_scripted_oracle():
    masked_bg, box_mask, box, reference = spec_example_inputs()
    got = MockCompositor().compose(masked_bg, box_mask, reference, seed=0)
    want_img, want_footprint = scripted_stage1_oracle(masked_bg, box, reference, seed=0)
    assert np.array_equal(got.image.pixels, want_img)
    assert np.array_equal(got.sidecar.mask.bits, want_footprint)


def test_mock_compose_spec_example_footprint():
    masked_bg, box_mask, box, reference = spec_example_inputs()
    result = MockCompositor().compose(masked_bg, box_mask, reference, seed=0)
    sidecar = result.sidecar.mask
    assert sidecar.popcount == 324  # 18 x 18 = 90% of the 20-pixel box
    bb = tight_bbox(sidecar)
    assert (bb.w, bb.h) == (18, 18)
    assert (bb.x, bb.y) == (23, 23)  # centered in the box
    # the pasted region is reddish: red channel dominates inside the footprint
    inside = sidecar.bits == 1
    rgb = result.image.pixels[inside]
    assert rgb[:, 0].min() > 190
    assert rgb[:, 1].max() < 60


def test_mock_compose_textured_oracle(rng):
    # same replay on a non-trivial background, RGBA frame, textured reference
    px = rng.integers(60, 200, size=(48, 40, 4), dtype=np.uint8)
    bg = RasterImage(pixels=px)
    box = PlacementBox(5, 9, 17, 13)
    box_mask = rasterize_box(box, 40, 48)
    masked_bg = erase(bg, box_mask)
    ref = random_image(rng, 9, 7, channels=4)
    ref_px = np.array(ref.pixels)
    ref_px[:, :, 3] = 255
    ref_px[0:2, 0:3, 3] = 0  # carve the silhouette
    ref = RasterImage(pixels=ref_px)
    got = MockCompositor().compose(masked_bg, box_mask, ref, seed=99)
    want_img, want_footprint = scripted_stage1_oracle(masked_bg, box, ref, seed=99)
    assert np.array_equal(got.image.pixels, want_img)
    assert np.array_equal(got.sidecar.mask.bits, want_footprint)


def test_mock_compose_deterministic_and_seed_sensitive():
    masked_bg, box_mask, _, reference = spec_example_inputs()
    a = MockCompositor().compose(masked_bg, box_mask, reference, seed=7)
    b = MockCompositor().compose(masked_bg, box_mask, reference, seed=7)
    c = MockCompositor().compose(masked_bg, box_mask, reference, seed=8)
    assert a.image == b.image
    assert a.sidecar.mask == b.sidecar.mask
    assert a.image != c.image
    # a profile-pinned seed overrides the call seed
    pinned = MockCompositor(seed=7).compose(masked_bg, box_mask, reference, seed=123)
    assert pinned.image == a.image


def test_mock_compose_sidecar_inside_box(rng):
    for _ in range(20):
        bg = random_image(rng, 32, 32)
        box = PlacementBox(
            int(rng.integers(0, 16)), int(rng.integers(0, 16)),
            int(rng.integers(4, 16)), int(rng.integers(4, 16)),
        )
        box_mask = rasterize_box(box, 32, 32)
        ref = solid_rgba(6, 5, (200, 30, 40))
        result = MockCompositor().compose(erase(bg, box_mask), box_mask, ref, seed=0)
        assert np.all(result.sidecar.mask.bits <= box_mask.bits)


def test_mock_compose_empty_reference_errors():
    masked_bg, box_mask, _, _ = spec_example_inputs()
    with pytest.raises(EmptyReferenceError):
        MockCompositor().compose(masked_bg, box_mask, RasterImage.solid(5, 5, (255, 255, 255)), seed=0)


def test_mock_compose_box_flush_to_frame():
    # whole-frame box: all four border lines are missing -> gray fallback
    bg = RasterImage.solid(16, 16, (90, 90, 90))
    box_mask = BinaryMask.ones(16, 16)
    out = MockCompositor().compose(erase(bg, box_mask), box_mask, solid_rgba(4, 4, (200, 0, 0)), seed=0)
    assert out.image.width == 16


# ---------------------------------------------------------------------------
# segmenters
# ---------------------------------------------------------------------------


def test_oracle_segmenter_returns_sidecar(rng):
    img = random_image(rng, 16, 16)
    mask = random_mask(rng, 16, 16)
    got = OracleSegmenter().segment(img, PlacementBox(0, 0, 8, 8), sidecar=SidecarAlpha(mask))
    assert got == mask


def test_oracle_segmenter_missing_sidecar(rng):
    with pytest.raises(MissingOracleError):
        OracleSegmenter().segment(random_image(rng, 8, 8), PlacementBox(0, 0, 4, 4))


def test_heuristic_exact_red_block():
    px = np.full((24, 24, 3), 128, dtype=np.uint8)
    px[9:15, 9:15] = (255, 0, 0)
    img = RasterImage(pixels=px)
    box = PlacementBox(6, 6, 12, 12)
    got = HeuristicSegmenter(threshold=30.0).segment(img, box)

    # per-pixel distance-threshold oracle over the 2-pixel outer band
    band = []
    for y in range(24):
        for x in range(24):
            in_box = 6 <= x < 18 and 6 <= y < 18
            near = 4 <= x < 20 and 4 <= y < 20
            if near and not in_box:
                band.append(px[y, x].astype(float))
    expected = np.zeros((24, 24), dtype=np.uint8)
    for y in range(6, 18):
        for x in range(6, 18):
            d = min(np.linalg.norm(px[y, x].astype(float) - b) for b in band)
            expected[y, x] = 1 if d > 30.0 else 0
    assert np.array_equal(got.bits, expected)
    assert np.array_equal(got.bits[9:15, 9:15], np.ones((6, 6), dtype=np.uint8))
    assert got.popcount == 36


def test_heuristic_no_signal_gives_empty_mask():
    img = RasterImage.solid(20, 20, (77, 77, 77))
    got = HeuristicSegmenter(threshold=30.0).segment(img, PlacementBox(5, 5, 8, 8))
    assert got.popcount == 0


def test_heuristic_output_inside_box(rng):
    for _ in range(10):
        img = random_image(rng, 24, 24)
        box = PlacementBox(4, 6, 10, 9)
        got = HeuristicSegmenter(threshold=10.0).segment(img, box)
        assert np.all(got.bits <= rasterize_box(box, 24, 24).bits)


def test_heuristic_band_empty_when_box_fills_frame():
    img = RasterImage.solid(8, 8, (10, 10, 10))
    got = HeuristicSegmenter().segment(img, PlacementBox(0, 0, 8, 8))
    assert got.popcount == 0


# ---------------------------------------------------------------------------
# mock refiner
# ---------------------------------------------------------------------------


def checker(n: int = 3) -> RasterImage:
    px = np.zeros((n, n, 3), dtype=np.uint8)
    for y in range(n):
        for x in range(n):
            px[y, x] = (220, 20, 20) if (x + y) % 2 == 0 else (20, 20, 220)
    return px_img(px)


def px_img(px: np.ndarray) -> RasterImage:
    return RasterImage(pixels=px)


def test_mock_refiner_checker_nearest_oracle(rng):
    bg2 = random_image(rng, 16, 16)
    bits = np.zeros((16, 16), dtype=np.uint8)
    bits[4:10, 5:11] = 1  # 6x6 square
    fg_mask = BinaryMask(bits=bits)
    ref = checker(3)
    got = MockRefiner().refine(bg2, fg_mask, ref, seed=0)

    # scripted oracle: nearest 3->6 doubles every pixel; write inside mask only
    scaled = resample(ref, 6, 6, "nearest").pixels
    expected = np.array(bg2.pixels)
    expected[4:10, 5:11] = scaled
    assert np.array_equal(got.pixels, expected)
    # nearest 2x upscale expands every source pixel into a 2x2 block
    for y in range(6):
        for x in range(6):
            assert np.array_equal(scaled[y, x], ref.pixels[y // 2, x // 2])


def test_mock_refiner_touches_only_mask(rng):
    for trial in range(1000):
        r = np.random.default_rng(trial)
        bg2 = random_image(r, 32, 32)
        mask = random_mask(r, 32, 32, density=0.2)
        if mask.popcount == 0:
            continue
        ref = solid_rgba(5, 4, (10, 200, 10))
        got = MockRefiner().refine(bg2, mask, ref, seed=trial)
        outside = mask.bits == 0
        assert np.array_equal(got.pixels[outside], bg2.pixels[outside])


def test_mock_refiner_deterministic(rng):
    bg2 = random_image(rng, 20, 20)
    mask_bits = np.zeros((20, 20), dtype=np.uint8)
    mask_bits[3:12, 6:15] = 1
    mask = BinaryMask(bits=mask_bits)
    ref = random_image(rng, 7, 9)
    assert MockRefiner().refine(bg2, mask, ref, seed=5) == MockRefiner().refine(bg2, mask, ref, seed=5)


def test_mock_refiner_rejects_empty_mask(rng):
    with pytest.raises(InvalidArgumentError):
        MockRefiner().refine(random_image(rng, 8, 8), BinaryMask.zeros(8, 8), checker(), seed=0)


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


def test_profile_validation():
    with pytest.raises(InvalidArgumentError):
        BackendProfile(
            name="x",
            compositor=BackendSpec(kind="oracle"),
            segmenter=BackendSpec(kind="oracle"),
            refiner=BackendSpec(kind="mock"),
        )
    with pytest.raises(InvalidArgumentError):
        BackendProfile(
            name="x",
            compositor=BackendSpec(kind="wire"),  # endpoint missing
            segmenter=BackendSpec(kind="oracle"),
            refiner=BackendSpec(kind="mock"),
        )
    with pytest.raises(InvalidArgumentError):
        mock_profile(refine_margin=-1)
    with pytest.raises(InvalidArgumentError):
        BackendProfile.from_dict(
            {
                "compositor": {"kind": "mock"},
                "segmenter": {"kind": "oracle"},
                "refiner": {"kind": "mock"},
                "max_side": 32,
            }
        )


def test_profile_round_trip():
    profile = BackendProfile(
        name="wired",
        compositor=BackendSpec(kind="wire", endpoint="http://example:9"),
        segmenter=BackendSpec(kind="heuristic", threshold=22.0),
        refiner=BackendSpec(kind="mock", seed=4),
        request_timeout=12.0,
        max_side=256,
        refine_margin=3,
        refine_policy="union",
    )
    assert BackendProfile.from_dict(profile.to_dict()) == profile


def test_build_backends_segmenter_mock_aliases_heuristic():
    profile = mock_profile(segmenter="mock", threshold=44.0)
    _, segmenter, _ = build_backends(profile)
    assert isinstance(segmenter, HeuristicSegmenter)
    assert segmenter.threshold == 44.0


# ---------------------------------------------------------------------------
# wire clients against a stub server
# ---------------------------------------------------------------------------


class _Stub(BaseHTTPRequestHandler):
    requests: list[tuple[str, bytes]] = []
    plan: list[tuple[int, bytes | None, float]] = []  # (status, body, delay)
    default_body: bytes = b""

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        type(self).requests.append((self.path, body))
        status, payload, delay = (200, None, 0.0)
        if type(self).plan:
            status, payload, delay = type(self).plan.pop(0)
        if delay:
            time.sleep(delay)
        data = payload if payload is not None else type(self).default_body
        self.send_response(status)
        self.send_header("Content-Type", "image/png")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    _Stub.requests = []
    _Stub.plan = []
    _Stub.default_body = RasterImage.solid(8, 8, (1, 2, 3)).to_png_bytes()
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Stub)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", _Stub
    server.shutdown()
    thread.join(timeout=2)


def _first_png(body: bytes) -> Image.Image:
    idx = body.find(b"\x89PNG")
    return Image.open(io.BytesIO(body[idx:]))


def test_wire_compositor_pass_through(stub_server, rng):
    endpoint, stub = stub_server
    fixed = random_image(rng, 8, 8)
    stub.default_body = fixed.to_png_bytes()
    client = WireClient(endpoint=endpoint, timeout=5.0, max_side=64, retry_base_s=0.01)
    box_mask = rasterize_box(PlacementBox(2, 2, 4, 4), 8, 8)
    got = WireCompositor(client).compose(random_image(rng, 8, 8), box_mask, random_image(rng, 4, 4), seed=3)
    assert got.image == fixed
    assert got.sidecar is None
    path, body = stub.requests[0]
    assert path == "/v1/compose"
    for part in (b'name="masked_bg"', b'name="box_mask"', b'name="reference"', b'name="meta"'):
        assert part in body
    assert b'"box": [2, 2, 4, 4]' in body
    assert b'"seed": 3' in body


def test_wire_segmenter_mask_and_resize_undone(stub_server, rng):
    endpoint, stub = stub_server
    mask = random_mask(rng, 64, 64)
    stub.default_body = mask.to_png_bytes()
    client = WireClient(endpoint=endpoint, timeout=5.0, max_side=64, retry_base_s=0.01)
    image = random_image(rng, 128, 96)
    got = WireSegmenter(client).segment(image, PlacementBox(10, 10, 30, 20))
    # output resampled back to the input frame
    assert (got.width, got.height) == (128, 96)
    # request image was shrunk to the max_side bound
    _, body = stub.requests[0]
    sent = _first_png(body)
    assert max(sent.size) == 64


def test_wire_refiner_retry_then_success(stub_server, rng):
    endpoint, stub = stub_server
    final = random_image(rng, 12, 12)
    stub.plan = [(500, b"boom", 0.0), (200, final.to_png_bytes(), 0.0)]
    client = WireClient(endpoint=endpoint, timeout=5.0, max_side=64, retry_base_s=0.01)
    mask_bits = np.zeros((12, 12), dtype=np.uint8)
    mask_bits[2:6, 2:6] = 1
    got = WireRefiner(client).refine(
        random_image(rng, 12, 12), BinaryMask(bits=mask_bits), random_image(rng, 4, 4), seed=0
    )
    assert got == final
    assert len(stub.requests) == 2


def test_wire_gives_up_after_single_retry(stub_server, rng):
    endpoint, stub = stub_server
    stub.plan = [(503, b"no", 0.0), (503, b"no", 0.0)]
    client = WireClient(endpoint=endpoint, timeout=5.0, max_side=64, retry_base_s=0.01)
    box_mask = rasterize_box(PlacementBox(1, 1, 2, 2), 8, 8)
    with pytest.raises(BackendUnavailableError):
        WireCompositor(client).compose(random_image(rng, 8, 8), box_mask, random_image(rng, 3, 3), seed=0)
    assert len(stub.requests) == 2


def test_wire_unreachable_endpoint_errors(rng):
    client = WireClient(endpoint="http://127.0.0.1:9", timeout=0.3, max_side=64, retry_base_s=0.01)
    box_mask = rasterize_box(PlacementBox(1, 1, 2, 2), 8, 8)
    with pytest.raises(BackendUnavailableError):
        WireCompositor(client).compose(random_image(rng, 8, 8), box_mask, random_image(rng, 3, 3), seed=0)


def test_wire_inputs_not_mutated(stub_server, rng):
    endpoint, stub = stub_server
    image = random_image(rng, 128, 128)
    before = np.array(image.pixels)
    client = WireClient(endpoint=endpoint, timeout=5.0, max_side=64, retry_base_s=0.01)
    stub.default_body = random_mask(rng, 64, 64).to_png_bytes()
    WireSegmenter(client).segment(image, PlacementBox(4, 4, 40, 40))
    assert np.array_equal(image.pixels, before)
