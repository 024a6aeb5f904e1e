"""Exception types shared across the package."""


class EcgRouteError(Exception):
    """Base class for all package errors."""


class ParseError(EcgRouteError):
    """Raised when a binary or text file does not follow its format."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(EcgRouteError, ValueError):
    """Raised when inputs violate an operation's preconditions."""


class DataError(EcgRouteError):
    """Raised when dataset files are missing, corrupt or fail verification."""


class ChecksumMismatch(DataError):
    def __init__(self, filename, expected, actual):
        super().__init__(f"checksum mismatch for {filename}: expected {expected}, got {actual}")
        self.filename = filename
        self.expected = expected
        self.actual = actual


class NetworkError(DataError):
    def __init__(self, filename, reason):
        super().__init__(f"network failure fetching {filename}: {reason}")
        self.filename = filename
        self.reason = reason
