"""Price schedules and market parameters.

A schedule is an immutable, non-increasing price path on ``[0, T]``.  Four
families are provided: constant, linear with a clamp at zero, polynomial
``1 - (1 - r) (t/T)**alpha`` and the quasi-auction, a polynomial whose
terminal price is pinned to the revenue-maximising reserve.

All public methods take absolute time; the polynomial families normalise
``t / T`` internally.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

# slack allowed when a caller passes t a rounding error outside [0, T]
_TIME_SLACK = 1e-12


class Family(str, enum.Enum):
    CONSTANT = "constant"
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"
    QUASI_AUCTION = "quasi_auction"


@dataclass(frozen=True)
class MarketParams:
    """Arrival rate ``lam``, seller time sensitivity ``beta`` and horizon."""

    lam: float
    beta: float
    horizon: float = 1.0

    def __post_init__(self):
        for name in ("lam", "beta", "horizon"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value}")
        if self.lam < 0:
            raise ParameterError(f"arrival rate must be non-negative, got {self.lam}")
        if self.beta < 0:
            raise ParameterError(f"beta must be non-negative, got {self.beta}")
        if self.horizon <= 0:
            raise ParameterError(f"horizon must be positive, got {self.horizon}")

    def with_beta(self, beta: float) -> "MarketParams":
        return MarketParams(self.lam, beta, self.horizon)


class PriceSchedule:
    """Common interface of the schedule families.

    Subclasses implement ``_price`` and ``_slope`` on numpy arrays that are
    already known to lie inside the horizon.
    """

    family: Family
    T: float

    def _check_time(self, t):
        arr = np.asarray(t, dtype=float)
        slack = _TIME_SLACK * max(1.0, self.T)
        if np.any(~np.isfinite(arr)) or np.any(arr < -slack) or np.any(arr > self.T + slack):
            raise ParameterError(f"time outside [0, {self.T}]: {t}")
        return np.clip(arr, 0.0, self.T)

    def price(self, t):
        """Price at absolute time ``t`` (scalar or array)."""
        arr = self._check_time(t)
        out = self._price(arr)
        return float(out) if out.ndim == 0 else out

    def slope(self, t, side: str = "right"):
        """One-sided derivative of the price at ``t``.

        The right derivative is the default.  At ``t = T`` the right
        derivative does not exist and the left one is returned instead.
        """
        if side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        arr = self._check_time(t)
        out = self._slope(arr, side)
        return float(out) if out.ndim == 0 else out

    @property
    def initial_price(self) -> float:
        return float(self._price(np.asarray(0.0)))

    @property
    def terminal_price(self) -> float:
        return float(self._price(np.asarray(self.T)))

    @property
    def first_time_at_terminal(self) -> float:
        """Earliest time at which the price equals ``p(T)``."""
        return self.T

    def kinks(self) -> tuple[float, ...]:
        """Interior times where the slope is discontinuous."""
        return ()

    def inverse(self, price):
        """Earliest time at which the schedule reaches ``price``.

        Only defined on ``[p(T), p(0)]`` for strictly decreasing segments.
        """
        raise ParameterError(f"{self.family.value} schedule is not invertible")

    def to_dict(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def describe(self) -> str:
        """Compact ``key=value`` label used in frontier tables."""
        d = self.to_dict()
        return " ".join(f"{k}={d[k]:.6g}" for k in sorted(d) if k not in ("family", "T"))


@dataclass(frozen=True)
class ConstantSchedule(PriceSchedule):
    c: float
    T: float = 1.0
    family = Family.CONSTANT

    def __post_init__(self):
        _check_horizon(self.T)
        if not (0.0 <= self.c <= 1.0):
            raise ParameterError(f"constant price must lie in [0, 1], got {self.c}")

    def _price(self, t):
        return np.full_like(t, self.c, dtype=float)

    def _slope(self, t, side):
        return np.zeros_like(t, dtype=float)

    def _price1(self, t):
        return self.c

    def _slope1(self, t, side="right"):
        return 0.0

    @property
    def first_time_at_terminal(self) -> float:
        return 0.0

    def to_dict(self):
        return {"family": self.family.value, "c": self.c, "T": self.T}


@dataclass(frozen=True)
class LinearSchedule(PriceSchedule):
    """``p(t) = max(b - m t, 0)``; the clamp at ``b/m`` is a kink."""

    b: float
    m: float
    T: float = 1.0
    family = Family.LINEAR

    def __post_init__(self):
        _check_horizon(self.T)
        if not (0.0 <= self.b <= 1.0):
            raise ParameterError(f"intercept must lie in [0, 1], got {self.b}")
        if not (math.isfinite(self.m) and self.m > 0):
            raise ParameterError(f"slope must be positive and finite, got {self.m}")

    @property
    def kink(self) -> float:
        return self.b / self.m

    def _price(self, t):
        return np.maximum(self.b - self.m * t, 0.0)

    def _slope(self, t, side):
        k = self.kink
        if k >= self.T:
            return np.full_like(t, -self.m, dtype=float)
        on_ramp = t < k
        if side == "left":
            # at t = 0 there is no left derivative, so the right one stands
            on_ramp = on_ramp | ((t == k) & (t > 0))
        return np.where(on_ramp, -self.m, 0.0)

    def _price1(self, t):
        p = self.b - self.m * t
        return p if p > 0.0 else 0.0

    def _slope1(self, t, side="right"):
        k = self.kink
        if k >= self.T or t < k or (side == "left" and t == k and t > 0):
            return -self.m
        return 0.0

    @property
    def first_time_at_terminal(self) -> float:
        return min(self.kink, self.T)

    def kinks(self):
        return (self.kink,) if 0.0 < self.kink < self.T else ()

    def inverse(self, price):
        y = np.asarray(price, dtype=float)
        lo, hi = self.terminal_price, self.b
        if np.any(y < lo - 1e-12) or np.any(y > hi + 1e-12):
            raise ParameterError(f"price outside [{lo}, {hi}]")
        out = np.clip((self.b - y) / self.m, 0.0, self.first_time_at_terminal)
        return float(out) if out.ndim == 0 else out

    def to_dict(self):
        return {"family": self.family.value, "b": self.b, "m": self.m, "T": self.T}


@dataclass(frozen=True)
class PolynomialSchedule(PriceSchedule):
    """``p(t) = 1 - (1 - r) (t/T)**alpha`` with terminal price ``r``."""

    r: float
    alpha: float
    T: float = 1.0
    family = Family.POLYNOMIAL

    def __post_init__(self):
        _check_horizon(self.T)
        if not (0.0 <= self.r <= 1.0):
            raise ParameterError(f"terminal price must lie in [0, 1], got {self.r}")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ParameterError(f"exponent must be positive, got {self.alpha}")

    def _price(self, t):
        return 1.0 - (1.0 - self.r) * (t / self.T) ** self.alpha

    def _slope(self, t, side):
        x = t / self.T
        with np.errstate(divide="ignore"):
            d = -(1.0 - self.r) * self.alpha * x ** (self.alpha - 1.0) / self.T
        return np.asarray(d, dtype=float)

    def _price1(self, t):
        return 1.0 - (1.0 - self.r) * (t / self.T) ** self.alpha

    def _slope1(self, t, side="right"):
        x = t / self.T
        if x == 0.0 and self.alpha < 1.0:
            return -math.inf
        return -(1.0 - self.r) * self.alpha * x ** (self.alpha - 1.0) / self.T

    @property
    def first_time_at_terminal(self) -> float:
        return 0.0 if self.r == 1.0 else self.T

    def inverse(self, price):
        if self.r == 1.0:
            raise ParameterError("flat polynomial schedule is not invertible")
        y = np.asarray(price, dtype=float)
        if np.any(y < self.r - 1e-12) or np.any(y > 1.0 + 1e-12):
            raise ParameterError(f"price outside [{self.r}, 1]")
        x = np.clip((1.0 - y) / (1.0 - self.r), 0.0, 1.0) ** (1.0 / self.alpha)
        out = self.T * x
        return float(out) if out.ndim == 0 else out

    def to_dict(self):
        return {"family": self.family.value, "r": self.r, "alpha": self.alpha, "T": self.T}


@dataclass(frozen=True)
class QuasiAuctionSchedule(PolynomialSchedule):
    """Polynomial schedule whose terminal price is the reserve ``(lam T - 1) / (2 lam T)``."""

    family = Family.QUASI_AUCTION

    def __post_init__(self):
        super().__post_init__()
        if self.alpha < 1.0:
            raise ParameterError(f"quasi-auction exponent must be >= 1, got {self.alpha}")

    def to_dict(self):
        return {"family": self.family.value, "r": self.r, "alpha": self.alpha, "T": self.T}

    def describe(self) -> str:
        return f"alpha={self.alpha:.6g}"


def reserve_price(params: MarketParams) -> float:
    """Revenue-maximising reserve ``(lam T - 1) / (2 lam T)``."""
    n = params.lam * params.horizon
    if n <= 1.0:
        raise ParameterError(f"reserve price needs lam*T > 1, got {n}")
    return (n - 1.0) / (2.0 * n)


def make_quasi_auction(params: MarketParams, alpha: float) -> QuasiAuctionSchedule:
    return QuasiAuctionSchedule(r=reserve_price(params), alpha=alpha, T=params.horizon)


def _check_horizon(T):
    if not (math.isfinite(T) and T > 0):
        raise ParameterError(f"horizon must be positive and finite, got {T}")


_FIELDS = {
    Family.CONSTANT: ({"c"}, set()),
    Family.LINEAR: ({"b", "m"}, set()),
    Family.POLYNOMIAL: ({"r", "alpha"}, set()),
    Family.QUASI_AUCTION: ({"alpha"}, {"r", "lambda"}),
}


def schedule_from_dict(data: dict) -> PriceSchedule:
    """Build a schedule from its JSON object form.

    Keys are lowercase.  Unknown keys are rejected.  The quasi-auction
    accepts either its reserve ``r`` or the arrival rate ``lambda``.
    """
    if not isinstance(data, dict):
        raise ParameterError("schedule must be a JSON object")
    try:
        family = Family(data.get("family"))
    except ValueError:
        raise ParameterError(f"unknown schedule family {data.get('family')!r}") from None
    required, optional = _FIELDS[family]
    allowed = required | optional | {"family", "T"}
    unknown = set(data) - allowed
    if unknown:
        raise ParameterError(f"unknown keys for {family.value} schedule: {sorted(unknown)}")
    missing = required - set(data)
    if missing:
        raise ParameterError(f"missing keys for {family.value} schedule: {sorted(missing)}")
    try:
        vals = {k: float(v) for k, v in data.items() if k != "family"}
    except (TypeError, ValueError):
        raise ParameterError("schedule parameters must be numbers") from None
    T = vals.get("T", 1.0)
    if family is Family.CONSTANT:
        return ConstantSchedule(vals["c"], T)
    if family is Family.LINEAR:
        return LinearSchedule(vals["b"], vals["m"], T)
    if family is Family.POLYNOMIAL:
        return PolynomialSchedule(vals["r"], vals["alpha"], T)
    if ("r" in vals) == ("lambda" in vals):
        raise ParameterError("quasi-auction needs exactly one of 'r' or 'lambda'")
    if "lambda" in vals:
        return make_quasi_auction(MarketParams(vals["lambda"], 0.0, T), vals["alpha"])
    return QuasiAuctionSchedule(vals["r"], vals["alpha"], T)


def schedule_from_json(text: str) -> PriceSchedule:
    return schedule_from_dict(json.loads(text))
