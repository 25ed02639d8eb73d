"""Exception types shared across the package."""


class SplatforgeError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(SplatforgeError):
    """A numeric input is non-finite or outside its legal range."""


class ContractViolationError(SplatforgeError):
    """Caller broke an API precondition (mismatched shapes, missing data)."""


class GuidanceUnavailableError(SplatforgeError):
    """The guidance plugin failed for this step; the step may proceed without it."""


class NoSamplesError(SplatforgeError):
    """Sample classification produced nothing to compare against."""


class CheckpointFormatError(SplatforgeError):
    """A checkpoint file could not be parsed.

    Carries the byte offset at which parsing failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
