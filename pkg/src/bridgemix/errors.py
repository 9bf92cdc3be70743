"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class DegenerateIntervalError(DomainError):
    """Time interval with t' <= t where a strictly positive gap is required."""


class SingularOperatorError(RuntimeError):
    """Operation needs a strictly positive spectrum but zero eigenvalues are present."""


class NotPositiveDefiniteError(RuntimeError):
    """Covariance construction produced eigenvalues below tolerance."""


class UnsupportedOperationError(RuntimeError):
    """The operator backing does not support the requested operation."""


class EvidenceUnderflowError(RuntimeError):
    """Posterior weights underflowed even after max-subtraction."""


class NumericalAbort(RuntimeError):
    """A simulation produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class TrainingDiverged(NumericalAbort):
    """Training loss became non-finite."""

    def __init__(self, message, step=None, param_norm=None):
        super().__init__(message, step=step)
        self.param_norm = param_norm


class FitConvergenceError(RuntimeError):
    """Local search hit its iteration cap; ``best`` carries the best parameters found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(ValueError):
    """Invalid, inconsistent, or unknown configuration content."""
