"""Buyer and seller payoffs under a symmetric threshold strategy."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .equilibrium import ThresholdFunction
from .errors import NumericError, ParameterError
from .schedules import ConstantSchedule, MarketParams, PriceSchedule

QUAD_TOL = 1e-10
_SERIES_CUTOFF = 1e-8


@dataclass(frozen=True)
class SellerOutcome:
    revenue: float
    wait: float
    utility: float
    quad_err: float = 0.0

    def to_dict(self) -> dict:
        return {
            "revenue": self.revenue,
            "wait": self.wait,
            "utility": self.utility,
            "quad_err": self.quad_err,
        }

    def csv_row(self, precision: int = 12) -> str:
        return ",".join(f"{x:.{precision}g}" for x in (self.revenue, self.wait, self.utility))


def survival_probability(w: ThresholdFunction, lam: float, t):
    """``Pr(tau* > t) = exp(-lam t (1 - w^{-1}(t)))``."""
    x = np.asarray(t, dtype=float)
    if np.any(x < 0) or np.any(x > w.horizon * (1 + 1e-12)):
        raise ParameterError(f"time outside [0, {w.horizon}]: {t}")
    out = np.exp(-lam * x * (1.0 - w.inverse(x)))
    return float(out) if out.ndim == 0 else out


def interim_utility(v, tau, w: ThresholdFunction, s: PriceSchedule, lam: float):
    """Expected payoff at time 0 of targeting purchase time ``tau``.

    Independent of the buyer's own arrival time.
    """
    return (v - s.price(tau)) * survival_probability(w, lam, tau)


def _quad(func, a, b, tol):
    if b <= a:
        return 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            return integrate.quad(func, a, b, epsabs=tol, epsrel=0.0, limit=1000)
        except integrate.IntegrationWarning as exc:
            failure = exc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, _ = integrate.quad(func, a, b, epsabs=tol, limit=1000)
    raise NumericError(f"quadrature did not converge on [{a}, {b}]: {failure}", value)


_GL_LO = np.polynomial.legendre.leggauss(5)
_GL_HI = np.polynomial.legendre.leggauss(8)


def _cellwise(weight, w: ThresholdFunction, lam: float, a: float, b: float):
    """Integrate ``S(t) weight(t)`` over the interpolation cells inside ``[a, b]``.

    Within a cell ``w^{-1}`` is linear, so the integrand is smooth and a
    fixed Gauss-Legendre rule is accurate; the difference between two
    orders is the error estimate.
    """
    t_hi, t_lo = w.w[:-1], w.w[1:]
    v_left, v_right = w.v[:-1], w.v[1:]
    # clip cells to [a, b]; cells with zero width drop out
    lo = np.clip(t_lo, a, b)
    hi = np.clip(t_hi, a, b)
    keep = hi > lo
    if not np.any(keep):
        return 0.0, 0.0
    t_hi, t_lo, v_left, v_right = t_hi[keep], t_lo[keep], v_left[keep], v_right[keep]
    lo, hi = lo[keep], hi[keep]
    results = []
    for nodes, weights in (_GL_LO, _GL_HI):
        mid = 0.5 * (lo + hi)[:, None]
        half = 0.5 * (hi - lo)[:, None]
        t = mid + half * nodes[None, :]
        frac = (t_hi[:, None] - t) / (t_hi - t_lo)[:, None]
        v = v_left[:, None] + frac * (v_right - v_left)[:, None]
        f = np.exp(-lam * t * (1.0 - v)) * weight(t)
        results.append(float(np.sum(half * weights[None, :] * f)))
    return results[1], abs(results[1] - results[0])


def _integrate_survival(
    weight, w: ThresholdFunction, s: PriceSchedule, lam: float, upper: float, tol, extra=()
):
    """``int_0^upper S(t) weight(t) dt`` split where ``w^{-1}`` changes regime.

    Below the smallest threshold time and above the largest one ``w^{-1}`` is
    constant and adaptive quadrature is used; in between the cell rule.
    ``extra`` adds split points, which must not change the result.
    """
    t_min, t_max = float(w.w[-1]), float(w.w[0])
    v_top, v_bottom = w.upper_cutoff, w.lower_cutoff
    candidates = (*w.breakpoints(), *s.kinks(), *extra)
    cuts = sorted({0.0, upper} | {float(t) for t in candidates if 0.0 < t < upper})
    total, err = 0.0, 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= t_min:
            value, e = _quad(lambda t: math.exp(-lam * t * (1.0 - v_top)) * weight(t), a, b, tol)
        elif a >= t_max:
            value, e = _quad(lambda t: math.exp(-lam * t * (1.0 - v_bottom)) * weight(t), a, b, tol)
        else:
            value, e = _cellwise(weight, w, lam, a, b)
        total += value
        err += e
    return total, err


def expected_waiting_time(
    w: ThresholdFunction,
    params: MarketParams,
    s: PriceSchedule | None = None,
    tol=QUAD_TOL,
    extra_splits=(),
) -> tuple[float, float]:
    """Expected time until sale or expiry, with its quadrature error estimate."""
    lam, T = params.lam, params.horizon
    if lam == 0.0:
        return T, 0.0
    s = s or ConstantSchedule(0.0, T)

    def one(t):
        return np.ones_like(t) if isinstance(t, np.ndarray) else 1.0

    return _integrate_survival(one, w, s, lam, T, tol, extra_splits)


def expected_revenue(
    w: ThresholdFunction, s: PriceSchedule, params: MarketParams, tol=QUAD_TOL, extra_splits=()
) -> tuple[float, float]:
    """Expected sale price, zero when the item expires unsold.

    ``p(0) - p(T) exp(-lam T (1 - p(T))) + int_0^T S(t) p'(t) dt`` with ``S``
    the survival probability.
    """
    lam, T = params.lam, params.horizon
    if lam == 0.0:
        return 0.0, 0.0
    p0, pT = s.initial_price, s.terminal_price
    boundary = p0 - pT * math.exp(-lam * T * (1.0 - pT))
    # p' vanishes once the terminal price is reached (constant, linear clamp)
    upper = s.first_time_at_terminal
    if upper <= 0.0:
        return boundary, 0.0

    def slope(t):
        if isinstance(t, np.ndarray):
            return s._slope(t, "right")
        return s._slope1(t)

    integral, err = _integrate_survival(slope, w, s, lam, upper, tol, extra_splits)
    return boundary + integral, err


def seller_utility(revenue: float, wait: float, params: MarketParams, quad_err=0.0) -> SellerOutcome:
    return SellerOutcome(revenue, wait, revenue - params.beta * wait, quad_err)


def evaluate(w: ThresholdFunction, s: PriceSchedule, params: MarketParams, tol=QUAD_TOL) -> SellerOutcome:
    """Seller revenue, waiting time and utility for schedule ``s`` and threshold ``w``."""
    rev, e1 = expected_revenue(w, s, params, tol)
    wait, e2 = expected_waiting_time(w, params, s, tol)
    return seller_utility(rev, wait, params, e1 + e2)


def _one_minus_exp_over_x(x: float) -> float:
    """``(1 - e^{-x}) / x`` without cancellation near zero."""
    if x < _SERIES_CUTOFF:
        return 1.0 - x / 2.0 + x * x / 6.0
    return -math.expm1(-x) / x


def constant_closed_form(c: float, params: MarketParams) -> SellerOutcome:
    """Revenue ``c (1 - e^{-x})`` and wait ``T (1 - e^{-x}) / x`` with ``x = lam T (1 - c)``."""
    if not (0.0 <= c <= 1.0):
        raise ParameterError(f"constant price must lie in [0, 1], got {c}")
    T = params.horizon
    x = params.lam * T * (1.0 - c)
    sold = -math.expm1(-x)
    wait = T * _one_minus_exp_over_x(x)
    return seller_utility(c * sold, wait, params)
