"""Exception types shared across the package.

Every error carries an optional ``detail`` mapping so the command line
layer can emit machine-readable reports without string parsing.
"""
from __future__ import annotations

from typing import Any, Mapping


class GsplitError(Exception):
    """Base class for all package errors."""

    def __init__(self, message: str, detail: Mapping[str, Any] | None = None):
        super().__init__(message)
        self.detail: dict[str, Any] = dict(detail or {})


class ScheduleError(GsplitError):
    """Invalid or unattainable level schedule."""


class MemoryCapError(GsplitError):
    """A trial's level population exceeded the configured cap."""


class RetryLimitError(GsplitError):
    """Retry budget exhausted while waiting for a nonempty trial."""


class KernelFailureError(GsplitError):
    """A kernel emitted a non-finite or constraint-violating state."""


class InsufficientDataError(GsplitError):
    """Not enough trials to compute the requested statistic."""


class ZeroMassIntervalError(GsplitError):
    """Truncation interval has no representable probability mass."""


class DataFormatError(GsplitError):
    """Input data file failed validation."""
