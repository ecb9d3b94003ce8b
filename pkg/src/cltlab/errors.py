"""Exception hierarchy shared across the laboratory.

Everything raised on purpose derives from CltLabError so callers (and the
command line driver) can separate expected failures from genuine bugs.
"""


class CltLabError(Exception):
    """Base class for all deliberate failures."""


class DomainError(CltLabError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConfigurationError(CltLabError, ValueError):
    """A model spec, experiment config, or CLI argument set is invalid."""


class CapabilityError(CltLabError, RuntimeError):
    """An operation was requested from a model that does not support it
    (for example a conditional-variance oracle on a family that has none)."""


class QuadratureError(CltLabError, RuntimeError):
    """Adaptive integration failed to reach the requested tolerance within
    its evaluation budget."""


class DataFormatError(CltLabError, ValueError):
    """A file being read does not match the documented on-disk format."""
