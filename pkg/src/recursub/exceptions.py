"""Exception hierarchy shared across the package."""


class RecursubError(Exception):
    """Base class for all package-specific errors."""


class DomainError(RecursubError, ValueError):
    """An argument lies outside its mathematically valid domain."""


class DimensionMismatch(RecursubError, ValueError):
    """Array shapes or parameter layouts are inconsistent."""


class NonPositiveVariance(RecursubError):
    """The variance recursion produced a non-positive value.

    Signals an invalid parameter proposal; callers should reject,
    never repair.
    """


class NonStationary(RecursubError):
    """Parameters violate the stationarity condition."""


class DegenerateResiduals(RecursubError):
    """All control-variate residuals are zero where a ratio is required."""


class UndefinedVariance(RecursubError):
    """A subsample variance estimate was requested with m < 2."""


class Infeasible(RecursubError):
    """The tuning feasible set is empty at the given tolerance."""


class OptimizationFailure(RecursubError):
    """Every optimizer start diverged or failed."""


class SingularHessian(RecursubError):
    """The curvature estimate needed too much eigenvalue repair."""


class ParseError(RecursubError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptySeries(RecursubError, ValueError):
    """An input series contains no usable observations."""


class ConfigError(RecursubError, ValueError):
    """A run configuration failed validation."""
