"""Exception types shared across the package."""


class GrowPruneError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(GrowPruneError, ValueError):
    """Operands have incompatible dimensions."""


class ParameterError(GrowPruneError, ValueError):
    """A hyperparameter or argument is outside its valid range."""


class StateError(GrowPruneError, RuntimeError):
    """An operation was called in an invalid order (e.g. backward before forward)."""


class DataError(GrowPruneError, ValueError):
    """Input data violates a pipeline precondition."""


class ConfigError(GrowPruneError, ValueError):
    """A run configuration is inconsistent or incomplete."""


class FormatError(GrowPruneError, ValueError):
    """A serialized artifact has an unknown magic or unsupported version."""


class CorruptionError(FormatError):
    """A serialized artifact is structurally damaged (truncation, checksum mismatch)."""
