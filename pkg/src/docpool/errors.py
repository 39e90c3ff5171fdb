"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: ValidationError -> 1,
FormatError and OSError -> 2.
"""


class DocpoolError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DocpoolError):
    """Input violates a documented precondition or invariant."""


class FormatError(DocpoolError):
    """A binary or structured file does not conform to its format.

    ``offset`` is the byte position at which the problem was detected,
    when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset
