"""Exception types shared across the package."""


class ArrayAdaptError(Exception):
    """Base class for all package errors."""


class ConfigError(ArrayAdaptError):
    """Invalid configuration value or config file."""


class DomainError(ArrayAdaptError):
    """Geometric precondition violated (e.g. position outside the room)."""


class InfeasibleRoomError(ArrayAdaptError):
    """Requested reverberation cannot be realized with physical walls."""


class DataError(ArrayAdaptError):
    """Signal data violates a precondition (shape, finiteness, length)."""


class MeasurementError(ArrayAdaptError):
    """A performance measure fed to the adaptation loop is unusable."""


class UndefinedMeasureError(ArrayAdaptError):
    """The coherence measure is undefined for the current estimator state."""
