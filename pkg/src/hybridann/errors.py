"""Exception hierarchy shared across the package.

Argument validation failures raise plain ValueError; the classes here cover
failures that map to distinct CLI exit codes.
"""


class HybridAnnError(Exception):
    """Base class for package-specific errors."""


class FormatError(HybridAnnError):
    """A binary or text artifact violates its on-disk layout."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConstraintError(HybridAnnError):
    """A requested outcome is unattainable (e.g. unmet support or quality targets)."""


class CalibrationError(ConstraintError):
    """Metric calibration is impossible on the supplied statistics."""


class MappingError(ValueError):
    """A raw attribute label is absent from its dimension's dictionary."""
