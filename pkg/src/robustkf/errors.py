"""Exception types shared across the package."""


class RobustKFError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(RobustKFError):
    """An array has the wrong shape for its role."""


class ParameterDomainError(RobustKFError):
    """A numeric parameter is outside its admissible domain."""


class SolverFailure(RobustKFError):
    """The innovation QP did not return a usable solution.

    Carries the solver status and, when raised from a filter run, the
    index of the offending step.
    """

    def __init__(self, message: str, status: str, step_index: int | None = None):
        super().__init__(message)
        self.status = status
        self.step_index = step_index


class ConfigError(RobustKFError):
    """A run configuration is malformed; ``field`` names the offending path."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class IngestionError(RobustKFError):
    """An input data file could not be parsed; ``row`` is 1-based when known."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class SimulationError(RobustKFError):
    """Simulation left the trusted numeric range."""
