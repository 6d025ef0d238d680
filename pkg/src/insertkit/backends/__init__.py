"""Backend contracts, deterministic mocks, and wire-protocol clients."""

from __future__ import annotations

from ..errors import InvalidArgumentError
from .base import (
    BackendProfile,
    BackendSpec,
    Compositor,
    Refiner,
    Segmenter,
    SidecarAlpha,
    Stage1Result,
    key_reference,
    tight_bbox,
)
from .mock import HeuristicSegmenter, MockCompositor, MockRefiner, OracleSegmenter
from .wire import WireClient, WireCompositor, WireRefiner, WireSegmenter

__all__ = [
    "BackendProfile",
    "BackendSpec",
    "Compositor",
    "Segmenter",
    "Refiner",
    "SidecarAlpha",
    "Stage1Result",
    "key_reference",
    "tight_bbox",
    "MockCompositor",
    "MockRefiner",
    "OracleSegmenter",
    "HeuristicSegmenter",
    "WireClient",
    "WireCompositor",
    "WireSegmenter",
    "WireRefiner",
    "build_backends",
    "default_profiles",
    "mock_profile",
]


def build_backends(profile: BackendProfile) -> tuple[Compositor, Segmenter, Refiner]:
    """Instantiate the three backends a profile selects."""

    def wire_client(spec: BackendSpec) -> WireClient:
        return WireClient(
            endpoint=spec.endpoint or "",
            timeout=profile.request_timeout,
            max_side=profile.max_side,
        )

    if profile.compositor.kind == "mock":
        compositor: Compositor = MockCompositor(seed=profile.compositor.seed)
    else:
        compositor = WireCompositor(client=wire_client(profile.compositor))

    seg = profile.segmenter
    if seg.kind == "oracle":
        segmenter: Segmenter = OracleSegmenter()
    elif seg.kind in ("heuristic", "mock"):
        # "mock" for the segmenter means the deterministic procedural
        # variant, which is the color-band heuristic.
        segmenter = HeuristicSegmenter(threshold=seg.threshold)
    elif seg.kind == "wire":
        segmenter = WireSegmenter(client=wire_client(seg))
    else:  # pragma: no cover - profile validation rejects this earlier
        raise InvalidArgumentError(f"unknown segmenter kind {seg.kind!r}")

    if profile.refiner.kind == "mock":
        refiner: Refiner = MockRefiner(seed=profile.refiner.seed)
    else:
        refiner = WireRefiner(client=wire_client(profile.refiner))

    return compositor, segmenter, refiner


def mock_profile(
    name: str = "mock-oracle",
    segmenter: str = "oracle",
    refine_margin: int = 0,
    refine_policy: str = "largest_component",
    seed: int | None = None,
    threshold: float = 30.0,
) -> BackendProfile:
    """All-mock profile; the default for tests, demos, and offline runs."""
    return BackendProfile(
        name=name,
        compositor=BackendSpec(kind="mock", seed=seed),
        segmenter=BackendSpec(kind=segmenter, seed=seed, threshold=threshold),
        refiner=BackendSpec(kind="mock", seed=seed),
        refine_margin=refine_margin,
        refine_policy=refine_policy,
    )


def default_profiles() -> dict[str, BackendProfile]:
    return {
        "mock-oracle": mock_profile("mock-oracle", segmenter="oracle"),
        "mock-heuristic": mock_profile("mock-heuristic", segmenter="heuristic"),
    }
