"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: configuration and input
problems exit with 2, numerical failures with 3.
"""


class MetricRecError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MetricRecError):
    """Invalid run configuration (bad flag, missing path, bad combination)."""


class DataFormatError(MetricRecError):
    """A record could not be parsed; message carries the line number."""


class DataValidationError(MetricRecError):
    """A record parsed but violates a value constraint (e.g. rating range)."""


class EmptyDatasetError(DataValidationError):
    """The input contained no usable interactions."""


class NumericalError(MetricRecError):
    """A numerical operation produced non-finite or invalid values."""


class TrainingDiverged(NumericalError):
    """Training aborted because the objective blew up or became non-finite.

    ``checkpoint_path`` points at the last good model state, when one was
    written.
    """

    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
