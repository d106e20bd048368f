"""Exception types raised across lrdlab."""


class LrdLabError(Exception):
    """Base class for all lrdlab errors."""


class InvalidArgumentError(LrdLabError, ValueError):
    """An argument violates a documented precondition."""


class NumericalError(LrdLabError, ArithmeticError):
    """A computation produced a non-finite value or failed to converge."""


class EstimationError(NumericalError):
    """A parameter search found no feasible point on its grid."""
