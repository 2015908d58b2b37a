"""Exception types raised across the toolkit.

Every error derives from :class:`SparseCloudError` so callers (and the CLI)
can catch toolkit failures without swallowing unrelated bugs.
"""


class SparseCloudError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(SparseCloudError, ValueError):
    pass


class InvariantError(InvalidInputError):
    """A value violates a type invariant (e.g. non-positive focal length)."""


class InvalidDepthError(InvalidInputError):
    pass


class NearInfiniteDepthError(InvalidDepthError):
    pass


class BehindCameraError(InvalidInputError):
    pass


class ParameterError(InvalidInputError):
    pass


class EmptyInputError(InvalidInputError):
    pass


class DegenerateConfigurationError(SparseCloudError):
    pass


class PairingError(InvalidInputError):
    pass


class NoOverlapError(SparseCloudError):
    pass


class OrderingError(SparseCloudError):
    pass


class AssociationError(SparseCloudError):
    pass


class ParseError(SparseCloudError):
    """Malformed file content. ``position`` is a line number or byte offset."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at {position})"
        super().__init__(message)
        self.position = position


class TruncationError(ParseError):
    def __init__(self, expected, actual, position=None):
        super().__init__(
            f"truncated payload: expected {expected} bytes, got {actual}", position
        )
        self.expected = expected
        self.actual = actual


class NotNpyError(ParseError):
    pass


class UnsupportedLayoutError(ParseError):
    pass


class UnsupportedDtypeError(ParseError):
    pass


class DatasetError(SparseCloudError):
    pass


class SchemaError(DatasetError):
    pass


class InvalidImageError(InvalidInputError):
    pass


class SceneConfigurationError(SparseCloudError):
    pass
