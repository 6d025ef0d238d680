"""Two-stage generative image composition pipeline.

Stage 1 produces a scene-compatible foreground inside a placement box;
a box-prompted segmenter extracts its exact silhouette; stage 2 refills
that silhouette with the reference object's true details. The final
composite is mechanically guaranteed to leave every pixel outside the
silhouette bit-identical to the original background.
"""

from .backends import (
    BackendProfile,
    BackendSpec,
    build_backends,
    default_profiles,
    mock_profile,
)
from .imaging import BinaryMask, PlacementBox, RasterImage
from .pipeline import CompositionJob, JobState, Pipeline

__all__ = [
    "RasterImage",
    "BinaryMask",
    "PlacementBox",
    "BackendProfile",
    "BackendSpec",
    "build_backends",
    "default_profiles",
    "mock_profile",
    "Pipeline",
    "CompositionJob",
    "JobState",
]

__version__ = "0.1.0"
