"""Exception hierarchy shared by every quantfolio module."""


class QuantfolioError(Exception):
    """Base class for all library errors."""


class ValidationError(QuantfolioError):
    pass


class NonPositiveHorizon(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class OutOfRange(QuantfolioError, ValueError):
    pass


class SingularSigma(QuantfolioError):
    pass


class MaxIterationsExceeded(QuantfolioError):
    pass


class IdentityViolation(QuantfolioError):
    def __init__(self, t, residual):
        super().__init__(f"b'v* != |sigma'v*|^2 at t={t} (residual {residual:.3e})")
        self.t = t
        self.residual = residual


class BelowFloor(QuantfolioError, ValueError):
    pass


class HorizonReached(QuantfolioError, ValueError):
    pass


class NonPositiveVariance(QuantfolioError, ValueError):
    pass


class NonPositiveWealth(QuantfolioError, ValueError):
    pass


class OutOfBand(QuantfolioError, ValueError):
    pass


class DegenerateVariance(QuantfolioError, ValueError):
    pass


class OutOfSupport(QuantfolioError, ValueError):
    pass


class UnsupportedStrategy(QuantfolioError):
    pass


class DegenerateQuantile(QuantfolioError):
    pass


class ZeroDeviation(QuantfolioError, ValueError):
    pass


class HorizonContact(QuantfolioError, ValueError):
    pass


class WeightRowMismatch(QuantfolioError, ValueError):
    pass


class SchemeUnavailable(QuantfolioError):
    pass


class FloorBreach(QuantfolioError):
    pass


class InfeasibleDeviation(QuantfolioError, ValueError):
    pass


class EmptyBatch(QuantfolioError, ValueError):
    pass


class DegenerateRegressor(QuantfolioError, ValueError):
    pass
