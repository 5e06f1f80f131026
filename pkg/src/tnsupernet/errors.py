"""Exception types shared across the package."""


class TnSupernetError(Exception):
    """Base class for all package errors."""


class SupernetFormatError(TnSupernetError):
    """Malformed supernet document or inconsistent supernet structure."""


class DataFormatError(TnSupernetError):
    """Malformed benchmark CSV, triples TSV, or dataset layout."""


class EnumerationCapError(TnSupernetError):
    """An operation would exceed the configured enumeration or contraction cap."""


class ConfigError(TnSupernetError):
    """Invalid or incomplete run configuration."""


class NumericalError(TnSupernetError):
    """Non-finite objective or gradient, or a failed numerical self-check."""


class EvaluatorError(TnSupernetError):
    """A task evaluator raised while scoring; carries the iteration context."""
