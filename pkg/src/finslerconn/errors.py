"""Exception hierarchy shared by every module."""


class FinslerError(Exception):
    """Base class for all errors raised by the package."""


class OrderExceededError(FinslerError):
    """A derivative was requested beyond the jet truncation order."""


class DomainError(FinslerError):
    """Evaluation point outside the metric's admissible domain."""


class ZeroDirectionError(DomainError):
    """The tangent vector y vanishes."""


class StrongConvexityError(DomainError):
    """The fundamental tensor is not positive definite at the point."""


class SingularMetricError(FinslerError):
    """The fundamental tensor cannot be inverted."""


class StepUnderflowError(FinslerError):
    """Finite-difference step is too small relative to the coordinate scale."""


class DegenerateFlagError(FinslerError):
    """Transverse edge is (numerically) parallel to the flag pole."""


class ChartExitError(FinslerError):
    """A geodesic left the chart before the requested work was finished."""


class IllConditionedFitError(FinslerError):
    """Least-squares basis is numerically degenerate."""


class ConfigError(FinslerError):
    """Configuration document violates the schema."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
