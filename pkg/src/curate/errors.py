"""Typed errors raised across the curation toolkit."""


class CurateError(Exception):
    """Base class for all toolkit errors."""


class DecodeError(CurateError):
    """An image file could not be decoded."""

    def __init__(self, path, reason=""):
        self.path = str(path)
        self.reason = reason
        message = f"cannot decode {self.path}"
        if reason:
            message = f"{message}: {reason}"
        super().__init__(message)


class ImageTooSmallError(CurateError):
    """Image dimensions are below the minimum an operation requires."""


class DegenerateSamplesError(CurateError):
    """Sample set is too small or has zero variance for density estimation."""


class GridMismatchError(CurateError):
    """Two densities do not share the same evaluation grid."""


class SidecarError(CurateError):
    """Sidecar region-count file is malformed."""


class MissingCountError(CurateError):
    """No region count is available for a manifest record."""


class MissingFieldError(CurateError):
    """A manifest record lacks a field required by the operation."""


class ManifestError(CurateError):
    """Manifest file is malformed or violates record invariants."""


class ConfigError(CurateError):
    """Invalid curation configuration."""
