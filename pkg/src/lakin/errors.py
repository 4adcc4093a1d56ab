"""Shared exception types."""


class LakinError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(LakinError):
    """A file could not be parsed; carries the offending location."""

    def __init__(self, message: str, path=None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class ValidationError(LakinError):
    """Input parsed cleanly but violates a data invariant."""


class SegmentationError(LakinError):
    """Automatic repetition segmentation failed."""


class FeatureError(LakinError):
    """A kinematic feature is undefined for the given inputs."""
