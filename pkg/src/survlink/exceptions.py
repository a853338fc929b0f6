"""Exception hierarchy shared by every survlink module."""


class SurvlinkError(Exception):
    """Base class for all errors raised by survlink."""


class ConfigurationError(SurvlinkError, ValueError):
    """Invalid configuration values (rates, durations, grid sizes...)."""


class InsufficientDataError(SurvlinkError, ValueError):
    """Too few samples to build the requested estimate."""


class DegenerateDataError(SurvlinkError, ValueError):
    """Samples exist but carry no spread, so the MLE is undefined."""


class ConditioningError(SurvlinkError, ValueError):
    """Conditioning on an event of probability zero, i.e. F(t) = 1."""


class NoBandError(SurvlinkError, RuntimeError):
    """Every shape prior failed to bracket a confidence-bound root."""


class TrainingError(SurvlinkError, RuntimeError):
    """MLP training diverged (non-finite loss)."""


class SchemaVersionError(SurvlinkError, ValueError):
    """A serialized file carries an unknown or missing version header."""
