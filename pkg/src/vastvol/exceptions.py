"""Exception types shared across the package."""


class VastvolError(ValueError):
    """Base class for all domain errors raised by this package."""


class TickParseError(VastvolError):
    """A tick file row could not be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TickValidationError(VastvolError):
    """Tick data violates an invariant (duplicate timestamps, NaN price, ...)."""


class InsufficientDataError(VastvolError):
    """Too few observations for the requested estimator or grid."""


class InfeasibleError(VastvolError):
    """The optimization problem has an empty feasible set."""


class IndefiniteMatrixError(VastvolError):
    """A matrix required to be positive semi-definite is not."""


class SolverError(VastvolError):
    """The convex solver failed to reach the required tolerance."""
