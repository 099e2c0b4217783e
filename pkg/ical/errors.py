"""Exception types raised by the ICAL package.

All input-validation failures are ``ValueError`` subclasses so callers can catch
them the same way they catch plain ``ValueError``. Numeric blow-ups are
``ArithmeticError`` subclasses.
"""

from __future__ import annotations


class ShapeError(ValueError):
    """Tensor extents are inconsistent for the requested operation."""


class MaskError(ValueError):
    """A mask leaves a reduced slice with no valid entry."""


class ContractError(ValueError):
    """An API precondition was violated (for example a non-scalar loss)."""


class UnknownTokenError(ValueError):
    """A symbol is not part of the vocabulary."""

    def __init__(self, symbol: str, position: int) -> None:
        super().__init__(f"unknown token {symbol!r} at position {position}")
        self.symbol = symbol
        self.position = position


class InkmlParseError(ValueError):
    """An InkML document is malformed or carries no traces."""

    def __init__(self, message: str, offset: int | None = None) -> None:
        where = f" (byte offset {offset})" if offset is not None else ""
        super().__init__(f"{message}{where}")
        self.offset = offset


class LabelMissingError(ValueError):
    """A labeled sample was required but the document has no label."""


class DataError(ValueError):
    """A dataset on disk is missing files or holds malformed records."""


class ConfigError(ValueError):
    """A run configuration is invalid."""


class CheckpointError(ValueError):
    """A parameter container does not match the expected layout."""


class NumericError(ArithmeticError):
    """A tensor value or gradient is NaN or infinite."""
