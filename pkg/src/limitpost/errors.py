"""Exception taxonomy shared across the library and mapped to CLI exit codes."""

from __future__ import annotations


class LimitpostError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(LimitpostError):
    """Invalid, inconsistent or unparsable experiment configuration."""


class DataLoadError(LimitpostError):
    """A data file or data source could not be read or validated."""


class CalibrationError(DataLoadError):
    """Intensity calibration failed (rank-deficient design or non-decaying fit)."""


class SourceExhaustedError(DataLoadError):
    """A path source ran out of paths before the requested sample size."""


class NumericFault(LimitpostError):
    """A computation produced a non-finite or otherwise unusable value."""


class CriteriaViolation(LimitpostError):
    """A conservative admissibility criterion failed and strict mode is on."""


class DegenerateConditioningError(NumericFault):
    """A conditional expectation was requested on an event of numerically zero mass."""
