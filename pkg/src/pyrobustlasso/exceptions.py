"""Exception hierarchy shared by the library and the CLI."""


class RobustLassoError(Exception):
    """Base class for all errors raised by pyrobustlasso."""

    pass


class DataValidationError(RobustLassoError):
    """Raised when input arrays or CSV files fail validation."""

    def __init__(
        self, message: str, row: int | None = None, column: str | int | None = None
    ) -> None:
        super().__init__(message)
        self.row = row
        self.column = column


class SolverError(RobustLassoError):
    """Raised when a solver produces non-finite intermediate values."""

    pass


class CollinearityError(RobustLassoError):
    """Raised when first-stage residuals are (numerically) collinear."""

    pass


class SimulationError(RobustLassoError):
    """Raised when too many Monte Carlo replications fail."""

    def __init__(self, message: str, failed: int, total: int) -> None:
        super().__init__(message)
        self.failed = failed
        self.total = total
