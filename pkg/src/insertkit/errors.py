"""Exception hierarchy shared across the package."""

from __future__ import annotations


class InsertKitError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(InsertKitError, ValueError):
    """An argument violates a documented precondition."""


class DimensionMismatchError(InvalidArgumentError):
    """Two rasters that must share dimensions do not."""


class EmptyMaskError(InsertKitError):
    """Mask refinement produced an empty mask; carries the raw popcount.

    Signals segmentation failure: the pipeline maps this to a retryable
    failure rather than silently passing an empty region to stage 2.
    """

    def __init__(self, raw_popcount: int):
        super().__init__(f"refined mask is empty (raw mask had {raw_popcount} pixels)")
        self.raw_popcount = raw_popcount


class EmptyReferenceError(InsertKitError):
    """Reference image has no foreground pixels after alpha keying."""


class BackendUnavailableError(InsertKitError):
    """A wire backend timed out or returned a non-success status."""


class MissingOracleError(InsertKitError):
    """Oracle segmenter invoked on a job that carries no sidecar alpha."""


class UndefinedMetricError(InsertKitError):
    """Metric requested over an empty or degenerate region."""


class ManifestError(InsertKitError):
    """Manifest file missing, malformed, or referencing unresolvable paths."""


class IllegalTransitionError(InsertKitError):
    """Job action attempted from a state that does not permit it."""

    def __init__(self, message: str, state: str | None = None):
        super().__init__(message)
        self.state = state


class UnknownJobError(InsertKitError):
    """Job id not present in the store."""
