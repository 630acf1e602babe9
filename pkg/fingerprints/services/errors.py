# fingerprints/services/errors.py

from __future__ import annotations

from typing import Optional


class FingerprintError(Exception):
    """Base class for every error raised by the positioning and experiment services."""
    pass


class InvalidInputError(FingerprintError, ValueError):
    """Raised when an operation's precondition does not hold (empty fingerprint, empty ROI, ...)."""
    pass


class NumericalError(FingerprintError, ArithmeticError):
    """Raised when a linear system cannot be solved."""
    pass


class ConfigError(FingerprintError):
    """Raised for unknown configuration keys or values failing validation."""
    pass


class DatasetParseError(FingerprintError):
    """
    Raised when a dataset file or RFM container is malformed.

    `line` is 1-based and counts metadata and header lines.
    """

    def __init__(
        self,
        message: str,
        *,
        line: Optional[int] = None,
        column: Optional[str] = None,
    ) -> None:
        self.line = line
        self.column = column
        location = []
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column '{column}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")
