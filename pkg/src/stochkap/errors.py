"""Exception hierarchy shared by all stochkap modules."""


class StochkapError(Exception):
    """Base class for library errors."""


class ConfigurationError(StochkapError, ValueError):
    """Invalid configuration value or schema violation."""


class UsageError(StochkapError, ValueError):
    """Inconsistent arguments passed by the caller."""


class NumericalError(StochkapError, ArithmeticError):
    """A numerical procedure failed to converge or produced garbage."""


class DecompositionError(NumericalError):
    """Cholesky factorization failed; ``pivot`` is the 0-based failing row."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SingularMatrixError(NumericalError):
    """A linear system could not be solved because of a vanishing pivot."""


class DegenerateMeasureError(NumericalError):
    """Orthogonalization hit a direction of (numerically) zero norm."""

    def __init__(self, message, exponent=None):
        super().__init__(message)
        self.exponent = exponent


class EvaluationError(NumericalError):
    """An integrand or sample produced a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class TruncationError(NumericalError):
    """More spectral terms requested than the operator numerically supports."""


class ModelValidityError(NumericalError):
    """A physical field left its admissible range (e.g. became nonpositive)."""


class ConvergenceError(NumericalError):
    """An iterative search exhausted its cap without meeting its tolerance."""
