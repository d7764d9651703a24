"""Exception hierarchy shared by the solver modules."""


class PricerError(Exception):
    """Base class for all library errors."""


class ParameterError(PricerError, ValueError):
    """Invalid schedule or market parameters, or a query outside the horizon."""


class ConstructionError(PricerError):
    """The equilibrium construction could not produce a regular threshold."""

    def __init__(self, message, valuation=None):
        super().__init__(message)
        self.valuation = valuation


class SingularityError(ConstructionError):
    """The denominator of the threshold ODE vanished or changed sign."""


class NumericError(PricerError):
    """Quadrature failed to reach its tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class EmptyResultError(PricerError):
    """No verified frontier point is available."""
