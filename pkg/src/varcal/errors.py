"""Exception hierarchy.

Each family maps to a process exit code so shell pipelines can distinguish
bad invocations from bad inputs from numeric breakdowns.
"""

from __future__ import annotations


class VarcalError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(VarcalError):
    """Invalid configuration: bad flag values, inconsistent options."""

    exit_code = 2


class DataError(VarcalError):
    """Invalid input data: malformed CSV, bad dates, missing columns."""

    exit_code = 3


class NumericError(VarcalError):
    """Numeric failure during calibration or evaluation."""

    exit_code = 4


class EmptyBufferError(NumericError):
    """No calibration step could be run: the requested evaluation range
    ends before any score buffer becomes available."""
