"""Pricing an expiring item for strategically waiting buyers."""

from .equilibrium import (
    Provenance,
    SolverConfig,
    ThresholdFunction,
    VerificationReport,
    VerifyConfig,
    construct_threshold,
    verify_equilibrium,
)
from .errors import (
    ConstructionError,
    EmptyResultError,
    NumericError,
    ParameterError,
    PricerError,
    SingularityError,
)
from .payoffs import SellerOutcome, constant_closed_form, evaluate
from .schedules import (
    ConstantSchedule,
    Family,
    LinearSchedule,
    MarketParams,
    PolynomialSchedule,
    PriceSchedule,
    QuasiAuctionSchedule,
    make_quasi_auction,
    schedule_from_dict,
)
from .simulation import SimConfig, SimEstimate, estimate

__all__ = [
    "ConstantSchedule",
    "ConstructionError",
    "EmptyResultError",
    "Family",
    "LinearSchedule",
    "MarketParams",
    "NumericError",
    "ParameterError",
    "PolynomialSchedule",
    "PriceSchedule",
    "PricerError",
    "Provenance",
    "QuasiAuctionSchedule",
    "SellerOutcome",
    "SimConfig",
    "SimEstimate",
    "SingularityError",
    "SolverConfig",
    "ThresholdFunction",
    "VerificationReport",
    "VerifyConfig",
    "constant_closed_form",
    "construct_threshold",
    "estimate",
    "evaluate",
    "make_quasi_auction",
    "schedule_from_dict",
    "verify_equilibrium",
]
