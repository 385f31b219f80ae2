"""Exception types shared across the package."""


class StructHinfError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(StructHinfError):
    """Raised when an expression string cannot be parsed.

    Carries the offending source string and the 0-based position of the
    token that triggered the failure.
    """

    def __init__(self, message: str, source: str, pos: int):
        self.source = source
        self.pos = pos
        super().__init__(f"{message} (at position {pos} in {source!r})")


class DomainError(StructHinfError):
    """Raised when an expression is not well defined over a parameter box."""


class SchemaError(StructHinfError):
    """Raised when a problem file does not match the expected JSON schema."""


class DimensionError(StructHinfError):
    """Raised when matrix or partition dimensions are inconsistent."""


class StructureError(StructHinfError):
    """Raised when a matrix violates a required sparsity structure."""


class NumericsError(StructHinfError):
    """Raised when a numerical routine fails to produce a trustworthy result."""
