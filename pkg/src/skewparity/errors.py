"""Exception types raised by the library."""


class SkewParityError(Exception):
    """Base class for library errors."""


class ModelError(SkewParityError, ValueError):
    """Invalid model parameters or inputs (dimensions, PSD, ranges)."""


class SingularCovarianceError(ModelError):
    """A regime covariance cannot be factorized."""

    def __init__(self, message, regime=None):
        super().__init__(message)
        self.regime = regime


class UndefinedSkewness(SkewParityError, ArithmeticError):
    """Skewness requested for a distribution with (numerically) zero variance."""


class RegimeCollapseError(SkewParityError, RuntimeError):
    """EM drove the posterior mass of one regime to zero."""


class ExistenceError(SkewParityError):
    """The risk-budgeting portfolio is not guaranteed to exist at this level."""

    def __init__(self, message, alpha_minus, lam):
        super().__init__(message)
        self.alpha_minus = alpha_minus
        self.lam = lam


class SolverError(SkewParityError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
