"""Exception types shared across the package."""


class SmoothQRError(Exception):
    """Base class for all smoothqr-specific failures."""


class DegenerateDesignError(SmoothQRError, ValueError):
    """A design-matrix column has zero variance or the design is otherwise unusable."""


class DimensionMismatchError(SmoothQRError, ValueError):
    """Vector/matrix shapes do not agree."""


class CsvParseError(SmoothQRError, ValueError):
    """A CSV cell could not be parsed; message carries row/column location."""


class NumericalDivergenceError(SmoothQRError, ArithmeticError):
    """A loss or gradient became non-finite during iteration."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite value encountered at iteration {iteration}")


class SingularHessianError(SmoothQRError, ArithmeticError):
    """The plug-in Hessian estimate is numerically singular."""


class NonPDHessianError(SmoothQRError, ArithmeticError):
    """The one-step Hessian is not positive definite even after jitter escalation."""


class UnreliableInferenceError(SmoothQRError, ValueError):
    """Too few usable bootstrap draws to build an interval."""


class OracleBudgetError(SmoothQRError, RuntimeError):
    """A brute-force oracle would exceed its enumeration or subdivision budget."""
