"""Exception hierarchy shared across the package.

CLI exit codes map onto these classes: usage errors exit 1, input format
problems exit 2, capacity exhaustion exits 3, and index corruption exits 4.
"""


class MemdexError(Exception):
    """Base class for all errors raised by this package."""


class InvariantViolationError(MemdexError):
    """Caller handed us data that breaks a documented precondition."""


class CorruptSegmentError(MemdexError):
    """Encoded block or segment bytes do not parse back consistently."""


class IndexFormatError(MemdexError):
    """Persisted index file is truncated, has a bad magic, or a bad version."""


class CapacityError(MemdexError):
    """The configured memory budget cannot hold the requested allocation."""


class StateError(MemdexError):
    """Operation called in the wrong lifecycle state (e.g. double finalize)."""


class ResultMismatchError(MemdexError):
    """Cross-configuration result identity check failed before timing."""


class InputFormatError(MemdexError):
    """Malformed corpus or query input; carries a line number when known."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class InputOrderError(InputFormatError):
    """Document ids must be strictly increasing across the input stream."""
