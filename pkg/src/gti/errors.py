"""Exception hierarchy shared by all modules."""


class GTIError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(GTIError, ValueError):
    """Invalid sizes, dimensions, methods or schedule parameters."""


class DomainError(GTIError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class EstimationError(GTIError, ArithmeticError):
    """A Monte Carlo or quadrature estimate could not be formed.

    ``index`` locates the offending node / sample when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InitializationError(GTIError):
    """No starting point inside the target support could be found."""


class DegenerateFunctionError(EstimationError):
    """Both correction factors vanished: f is zero on all posterior mass seen."""


class UndersampledBranchError(EstimationError):
    """The absolute-value path never produced enough samples of one sign."""

    def __init__(self, message, pos_count, neg_count):
        super().__init__(message)
        self.pos_count = pos_count
        self.neg_count = neg_count


class OverflowEstimateError(EstimationError, OverflowError):
    """A log-domain component is +inf."""


class MetricError(GTIError, ValueError):
    """Error metric undefined for the supplied truth value."""


class OracleResolutionError(GTIError):
    """A ground-truth quadrature did not reach the requested accuracy."""
