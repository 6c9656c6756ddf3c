"""Exception hierarchy shared by all stages."""


class RioError(Exception):
    """Base class for errors raised by this package."""

    #: process exit code used by the command line front end
    exit_code = 1


class InvalidInputError(RioError, ValueError):
    """An argument violates a documented precondition."""


class OutOfRangeError(InvalidInputError):
    """A query falls outside the span covered by the data (no extrapolation)."""


class UnusableScanError(RioError):
    """A radar scan carries no registrable structure (e.g. all zero)."""


class DegenerateMeasurementError(RioError):
    """The innovation covariance of a filter update is singular."""


class OrderingError(RioError):
    """A measurement event arrived with a timestamp older than the filter state."""


class ConfigError(RioError):
    """A configuration file or value is invalid."""

    exit_code = 2

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DatasetError(RioError):
    """A dataset on disk cannot be read."""

    exit_code = 3


class EmptyDatasetError(DatasetError):
    """A dataset directory contains no usable records."""


class ScanLoadError(DatasetError):
    """A single scan file is missing or corrupt."""

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class GenerationError(RioError):
    """A synthetic scene specification cannot be realised."""


class EvaluationError(RioError):
    """Trajectories cannot be compared (e.g. disjoint time spans)."""

    exit_code = 4
