"""Shared exception types.

Every module raises one of these so callers (CLI, service) can map failures
to exit codes / HTTP statuses without string matching.
"""


class IrkitError(Exception):
    """Base class for all toolkit errors."""


class DomainError(IrkitError, ValueError):
    """An input value is outside the mathematical domain of an operation."""


class SingularityError(DomainError):
    """An input sits on (or past) a singularity of a formula."""


class SchemaError(IrkitError, ValueError):
    """A file or request does not match its documented schema."""


class ConfigError(IrkitError, ValueError):
    """A configuration value is inconsistent or out of range."""


class ShapeError(IrkitError, ValueError):
    """Array shapes are incompatible for the requested operation."""


class NumericFault(IrkitError, ArithmeticError):
    """A non-finite value surfaced where the contract requires finite ones."""


class UndefinedMetricError(IrkitError, ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class UnsupportedModelError(IrkitError, TypeError):
    """The operation does not apply to this model family."""
