"""Closed-form pricing benchmarks for thin and thick markets.

Thin market: under preemption the optimal schedule is a constant price
``c*`` solving ``F(c) = c - 1 + ln(1 + lam T (c + beta T / 2)) / (lam T) = 0``,
clamped to ``[0, 1]``.  Thick market: with completely impatient buyers the
optimal schedule is ``p(t) = max(1 - beta t, 0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import Provenance, SolverConfig, ThresholdFunction, construct_threshold
from .errors import ParameterError
from .payoffs import SellerOutcome, constant_closed_form, evaluate, seller_utility
from .schedules import ConstantSchedule, LinearSchedule, MarketParams, PriceSchedule


@dataclass(frozen=True)
class ThinMarketSolution:
    c_hat: float
    c_star: float
    residual: float
    clamped: bool


def implicit_price_equation(c: float, params: MarketParams) -> float:
    n = params.lam * params.horizon
    return c - 1.0 + math.log1p(n * (c + 0.5 * params.beta * params.horizon)) / n


def thin_optimal_constant(params: MarketParams) -> ThinMarketSolution:
    """Root of the thin-market implicit equation by bisection.

    ``F`` is strictly increasing, so a sign change is found by widening
    ``[-1, 2]``; the lower end never leaves the domain of the logarithm.
    """
    if params.lam <= 0:
        raise ParameterError("thin-market benchmark needs a positive arrival rate")
    n, T = params.lam * params.horizon, params.horizon
    edge = -1.0 / n - 0.5 * params.beta * T  # log argument vanishes here

    def F(c):
        return implicit_price_equation(c, params)

    lo, hi = -1.0, 2.0
    if lo <= edge:
        lo = 0.5 * (edge + hi)
    while F(lo) > 0:
        lo = edge + 0.5 * (lo - edge)
    while F(hi) < 0:
        hi = 2.0 * hi + 1.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if F(mid) < 0:
            lo = mid
        else:
            hi = mid
    c_hat = lo if abs(F(lo)) <= abs(F(hi)) else hi
    c_star = min(max(c_hat, 0.0), 1.0)
    return ThinMarketSolution(c_hat, c_star, abs(F(c_hat)), c_star != c_hat)


def preemptive_utility(c: float, params: MarketParams) -> SellerOutcome:
    """Seller outcome of constant price ``c`` when the first arrival may wait.

    A buyer who arrives and values the item at least ``c`` buys at arrival,
    so the conditional wait is ``T / 2``.
    """
    if not (0.0 <= c <= 1.0):
        raise ParameterError(f"constant price must lie in [0, 1], got {c}")
    T = params.horizon
    miss = math.exp(-params.lam * T * (1.0 - c))
    return seller_utility(c * (1.0 - miss), 0.5 * T * (1.0 - miss) + T * miss, params)


def full_model_utility_slope(c: float, params: MarketParams) -> float:
    """Derivative in ``c`` of the constant-schedule seller utility (full model)."""
    T, lam = params.horizon, params.lam
    n = lam * T
    x = n * (1.0 - c)
    e = math.exp(-x)
    if x < 1e-6:
        # series of (x e^-x - (1 - e^-x)) / x^2 = -1/2 + 2x/3 - ...
        dg = -0.5 + 2.0 * x / 3.0
    else:
        dg = (x * e + math.expm1(-x)) / (x * x)
    return (1.0 - e) - c * n * e + params.beta * T * n * dg


def full_model_optimal_constant(params: MarketParams, scan: int = 1000) -> float:
    """Maximiser of the full-model constant-schedule utility on ``[0, 1]``.

    A coarse scan brackets the best grid cell; bisection on the derivative
    refines it when the maximum is interior.
    """
    cs = np.linspace(0.0, 1.0, scan + 1)
    us = [constant_closed_form(float(c), params).utility for c in cs]
    i = int(np.argmax(us))
    lo, hi = cs[max(i - 1, 0)], cs[min(i + 1, scan)]
    d_lo, d_hi = full_model_utility_slope(lo, params), full_model_utility_slope(hi, params)
    if not (d_lo > 0 > d_hi):
        return float(cs[i])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if full_model_utility_slope(mid, params) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def thick_optimal_linear(params: MarketParams) -> PriceSchedule:
    """``p(t) = max(1 - beta t, 0)``; a flat price of 1 when ``beta = 0``."""
    if params.beta == 0:
        return ConstantSchedule(1.0, params.horizon)
    return LinearSchedule(1.0, params.beta, params.horizon)


def impatient_threshold(s: PriceSchedule, points: int = 10001) -> ThresholdFunction:
    """Threshold ``w = p^{-1}`` of buyers who buy as soon as the price meets their value."""
    p0, pT = s.initial_price, s.terminal_price
    t_end = s.first_time_at_terminal
    if not (p0 > pT and t_end > 0):
        raise ParameterError(f"{s.family.value} schedule has no invertible segment")
    # uniform in both time and price so steep and flat stretches are resolved
    v = np.union1d(s.price(np.linspace(0.0, t_end, points)), np.linspace(pT, p0, points))
    v = v[(v >= pT) & (v <= p0)]
    w = s.inverse(v)
    keep = np.concatenate([[True], np.diff(w) < 0])
    v, w = v[keep], w[keep]
    return ThresholdFunction(
        v=v, w=w, lower_cutoff=pT, upper_cutoff=p0, provenance=Provenance.IMPATIENT, horizon=s.T
    )


def benchmark_report(params: MarketParams, solver: SolverConfig | None = None) -> dict:
    """Both benchmarks, each under its simplifying assumption and the full model."""
    report: dict = {"params": {"lambda": params.lam, "beta": params.beta, "T": params.horizon}}
    if params.lam > 0:
        thin = thin_optimal_constant(params)
        c_full = full_model_optimal_constant(params)
        u_full = constant_closed_form(thin.c_star, params).utility
        report["thin"] = {
            "c_hat": thin.c_hat,
            "c_star": thin.c_star,
            "clamped": thin.clamped,
            "residual": thin.residual,
            "U_preemptive": preemptive_utility(thin.c_star, params).utility,
            "U_full_model": u_full,
            "c_full_model_opt": c_full,
            "U_full_model_opt": constant_closed_form(c_full, params).utility,
        }
    s = thick_optimal_linear(params)
    thick: dict = {"slope": params.beta, "schedule": s.to_dict()}
    if isinstance(s, LinearSchedule):
        thick["U_impatient"] = evaluate(impatient_threshold(s), s, params).utility
        w = construct_threshold(s, params, solver)
        thick["U_full_model"] = evaluate(w, s, params).utility
    else:
        thick["U_impatient"] = thick["U_full_model"] = constant_closed_form(1.0, params).utility
    report["thick"] = thick
    return report
