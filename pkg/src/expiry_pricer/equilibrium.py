"""Construction and verification of value-based threshold equilibria.

Buyers with valuation ``v`` who arrive at ``alpha`` purchase at
``max(w(v), alpha)``.  The threshold ``w`` is built by integrating the
first-order condition of the buyer's interim utility forward in ``v`` from
the terminal price, then checked against the rationality and
connected-argmax conditions.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionError, ParameterError, SingularityError
from .schedules import ConstantSchedule, MarketParams, PriceSchedule

log = logging.getLogger(__name__)


class Provenance(str, enum.Enum):
    ODE = "ode_constructed"
    CONSTANT = "closed_form_constant"
    IMPATIENT = "closed_form_impatient"


@dataclass(frozen=True, eq=False)
class ThresholdFunction:
    """Monotone threshold ``w(v)`` stored on a valuation grid.

    ``v`` and ``w`` hold the active segment, starting at ``lower_cutoff``.
    Below ``lower_cutoff`` buyers never purchase (``w = inf``); above
    ``upper_cutoff`` they purchase on arrival (``w = 0``).  When the active
    segment never reaches zero it ends at ``v = 1`` with ``w(1) > 0``.
    """

    v: np.ndarray
    w: np.ndarray
    lower_cutoff: float
    upper_cutoff: float
    provenance: Provenance
    horizon: float
    step: float = math.nan
    step_halving_change: float = math.nan
    near_boundary_flag: bool = False

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        w = np.array(self.w, dtype=float)
        if v.ndim != 1 or v.shape != w.shape or v.size == 0:
            raise ParameterError("threshold grid must be two equal-length 1-d arrays")
        if np.any(np.diff(v) <= 0):
            raise ParameterError("valuation grid must be strictly increasing")
        if np.any(np.diff(w) > 0):
            raise ParameterError("threshold must be non-increasing")
        v.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    def __call__(self, valuation):
        """Target purchase time for valuation(s); ``inf`` means never."""
        x = np.asarray(valuation, dtype=float)
        out = np.interp(x, self.v, self.w)
        out = np.where(x < self.lower_cutoff, np.inf, out)
        out = np.where(x > self.upper_cutoff, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def inverse(self, t):
        """``inf{v : w(v) <= t}`` with linear interpolation on the grid."""
        x = np.asarray(t, dtype=float)
        neg_w = -self.w
        idx = np.searchsorted(neg_w, -x, side="left")
        n = self.w.size
        hi = np.clip(idx, 1, n - 1) if n > 1 else np.zeros_like(idx)
        lo = hi - 1 if n > 1 else hi
        w_lo, w_hi = self.w[lo], self.w[hi]
        v_lo, v_hi = self.v[lo], self.v[hi]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(w_lo > w_hi, (w_lo - x) / (w_lo - w_hi), 1.0)
        out = v_lo + np.clip(frac, 0.0, 1.0) * (v_hi - v_lo)
        out = np.where(idx == 0, self.lower_cutoff, out)
        out = np.where(idx >= n, self.upper_cutoff, out)
        return float(out) if out.ndim == 0 else out

    @property
    def active_end(self) -> float:
        """Smallest finite threshold value on the grid."""
        return float(self.w[-1])

    @property
    def reaches_zero(self) -> bool:
        return self.w[-1] == 0.0

    def breakpoints(self) -> tuple[float, ...]:
        """Times where ``w^{-1}`` changes regime (quadrature split points)."""
        pts = {float(self.w[0]), float(self.w[-1])}
        return tuple(sorted(t for t in pts if 0.0 < t < self.horizon))

    def to_dict(self) -> dict:
        return {
            "lower_cutoff": self.lower_cutoff,
            "upper_cutoff": self.upper_cutoff,
            "provenance": self.provenance.value,
            "horizon": self.horizon,
            "step": None if math.isnan(self.step) else self.step,
            "step_halving_change": (
                None if math.isnan(self.step_halving_change) else self.step_halving_change
            ),
            "near_boundary_flag": self.near_boundary_flag,
            "v": self.v.tolist(),
            "w": self.w.tolist(),
        }

    def to_csv(self, precision: int = 12) -> str:
        """CSV with header ``v,w``; the no-purchase region is one ``inf`` row."""
        rows = ["v,w"]
        if self.lower_cutoff > 0.0:
            rows.append(f"{0.0:.{precision}g},inf")
        rows.extend(f"{a:.{precision}g},{b:.{precision}g}" for a, b in zip(self.v, self.w))
        if self.v[-1] < 1.0:
            rows.append(f"{1.0:.{precision}g},{0.0:.{precision}g}")
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class SolverConfig:
    """Step control of the threshold ODE."""

    step: float = 1e-4
    denominator_tol: float = 1e-10
    zero_tol: float = 1e-8
    check_halving: bool = False
    richardson_tol: float = 1e-6
    # a denominator sign change with w below this fraction of T is the w -> 0 event
    zero_boundary_w: float = 1e-3

    def __post_init__(self):
        if not (0 < self.step < 0.1):
            raise ParameterError(f"ODE step must lie in (0, 0.1), got {self.step}")


@dataclass(frozen=True)
class VerifyConfig:
    tau_points: int = 4096
    n_valuations: int = 64
    plateau_tol: float = 1e-9
    rationality_tol: float = 1e-9
    # allowed shortfall of Pi(w(v)) below the grid maximum, relative to the spread of Pi
    best_response_tol: float = 1e-6
    fd_step: float = 1e-5
    foc_tol: float = 1e-3

    def __post_init__(self):
        if self.tau_points < 2 or self.n_valuations < 1:
            raise ParameterError("verification grids need tau_points >= 2 and n_valuations >= 1")
        tols = (self.plateau_tol, self.rationality_tol, self.best_response_tol, self.foc_tol)
        if min(tols) < 0 or not self.fd_step > 0:
            raise ParameterError("verification tolerances must be non-negative and fd_step positive")


@dataclass
class VerificationReport:
    rationality_ok: bool
    connected_argmax_ok: bool
    max_foc_residual: float
    offending_valuations: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.rationality_ok and self.connected_argmax_ok

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "rationality_ok": self.rationality_ok,
            "connected_argmax_ok": self.connected_argmax_ok,
            "max_foc_residual": self.max_foc_residual,
            "offending_valuations": self.offending_valuations,
        }


def _ode_slope(s: PriceSchedule, w: float) -> float:
    # Left derivative: the active segment ends at the Linear clamp, so the
    # ramp slope applies at the kink itself.
    return s._slope1(w, "left" if w > 0.0 else "right")


def _rhs_parts(v, w, s, lam):
    u = v - s._price1(w)
    num = lam * w * u
    den = lam * (1.0 - v) * u + _ode_slope(s, w)
    return num, den


def ode_rhs(v: float, w: float, s: PriceSchedule, lam: float, den_tol: float = 1e-10) -> float:
    """Right-hand side of the threshold ODE ``dw/dv``.

    ``lam w (v - p(w)) / (lam (1 - v)(v - p(w)) + p'(w))``.  A vanishing
    numerator (``w = 0``, ``lam = 0`` or zero margin) gives 0 without
    consulting the denominator.
    """
    if not (0.0 <= w <= s.T):
        raise ParameterError(f"threshold time {w} outside [0, {s.T}]")
    num, den = _rhs_parts(v, w, s, lam)
    if num == 0.0:
        return 0.0
    if abs(den) < den_tol:
        raise SingularityError(f"ODE denominator vanishes at v={v:.10g}, w={w:.10g}", v)
    return num / den


class _Integrator:
    """Fixed-step RK4 in ``v`` with zero-crossing detection."""

    def __init__(self, s: PriceSchedule, lam: float, cfg: SolverConfig):
        self.s = s
        self.lam = lam
        self.cfg = cfg
        self.T = s.T

    def f(self, v, w):
        if w <= 0.0:
            return 0.0
        if w > self.T:
            w = self.T
        num, den = _rhs_parts(v, w, self.s, self.lam)
        if num == 0.0:
            return 0.0
        # the denominator starts negative at the boundary condition; reaching
        # zero or turning positive means the solution has a vertical tangent
        if den > -self.cfg.denominator_tol:
            raise SingularityError(
                f"ODE denominator changes sign at v={v:.10g} (w={w:.10g}, den={den:.3g})", v
            )
        return num / den

    def step(self, v, w, h):
        f = self.f
        k1 = f(v, w)
        k2 = f(v + 0.5 * h, w + 0.5 * h * k1)
        k3 = f(v + 0.5 * h, w + 0.5 * h * k2)
        k4 = f(v + h, w + h * k3)
        return w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def zero_crossing(self, v, w, h):
        """Sub-step at which the RK4 update first reaches zero."""
        lo, hi = 0.0, h
        while hi - lo > self.cfg.zero_tol:
            mid = 0.5 * (lo + hi)
            try:
                w_mid = self.step(v, w, mid)
            except SingularityError:
                w_mid = -1.0
            if w_mid > 0.0:
                lo = mid
            else:
                hi = mid
        return hi

    def den_at_zero(self, v):
        """Denominator at ``w = 0``; non-negative once buying on arrival is optimal."""
        s = self.s
        return self.lam * (1.0 - v) * (v - s._price1(0.0)) + s._slope1(0.0, "right")

    def zero_boundary(self, vs, ws, h):
        """Index and ``v`` where ``w`` reaches zero when the denominator vanishes with ``w``.

        Near ``w = 0`` the denominator tends to ``den_at_zero(v)`` and the
        solution reaches zero where that vanishes, which may lie a few steps
        back.  Returns None for a sign change away from ``w = 0``, which is a
        genuine singularity.
        """
        if ws[-1] > self.cfg.zero_boundary_w * self.T or self.den_at_zero(vs[-1] + h) < 0.0:
            return None
        k = len(vs) - 1
        while k > 0 and self.den_at_zero(vs[k]) >= 0.0:
            k -= 1
        if self.den_at_zero(vs[k]) >= 0.0:
            return 1, vs[0] + min(self.cfg.zero_tol, h)
        lo, hi = vs[k], (vs[k + 1] if k + 1 < len(vs) else vs[-1] + h)
        while hi - lo > self.cfg.zero_tol:
            mid = 0.5 * (lo + hi)
            if self.den_at_zero(mid) >= 0.0:
                hi = mid
            else:
                lo = mid
        return k + 1, hi

    def run(self, v0, w0, h):
        # the right-hand side stays regular at v = 1, so the grid ends there and
        # w^{-1} has no jump at the smallest threshold time
        v_end = 1.0
        if v0 >= v_end:
            return np.array([v0]), np.array([w0]), False
        n = max(1, math.ceil((v_end - v0) / h - 1e-9))
        hh = (v_end - v0) / n
        vs = [v0]
        ws = [w0]
        v, w = v0, w0
        hit_zero = w0 == 0.0
        for i in range(1, n + 1):
            if hit_zero:
                break
            try:
                w_new = self.step(v, w, hh)
            except SingularityError:
                found = self.zero_boundary(vs, ws, hh)
                if found is None:
                    raise
                k, v_bar = found
                del vs[k:], ws[k:]
                vs.append(v_bar)
                ws.append(0.0)
                hit_zero = True
                break
            if w_new <= 0.0:
                dv = self.zero_crossing(v, w, hh)
                vs.append(v + dv)
                ws.append(0.0)
                hit_zero = True
                break
            if w_new > w * (1.0 + 1e-12):
                raise ConstructionError(
                    f"non-monotone threshold at v={v + hh:.10g} ({w:.10g} -> {w_new:.10g})",
                    v + hh,
                )
            w_new = min(w_new, w)
            v = v0 + i * hh
            vs.append(v)
            ws.append(w_new)
            w = w_new
        return np.array(vs), np.array(ws), hit_zero


def constant_threshold(c: float, horizon: float = 1.0) -> ThresholdFunction:
    """Step threshold of a constant price: never below ``c``, buy on arrival above."""
    return ThresholdFunction(
        v=np.array([c]),
        w=np.array([0.0]),
        lower_cutoff=c,
        upper_cutoff=c,
        provenance=Provenance.CONSTANT,
        horizon=horizon,
    )


def construct_threshold(
    s: PriceSchedule, params: MarketParams, cfg: SolverConfig | None = None
) -> ThresholdFunction:
    """Build the candidate equilibrium threshold for schedule ``s``.

    The no-purchase region is ``[0, p(T))``; the marginal buyer ``v = p(T)``
    targets the first time the terminal price is reached; from there the ODE
    is integrated forward until ``w`` reaches zero or ``v`` reaches 1.  Raises
    ``SingularityError`` if the ODE denominator crosses zero away from ``w = 0``.
    """
    cfg = cfg or SolverConfig()
    if abs(s.T - params.horizon) > 1e-12 * params.horizon:
        raise ParameterError(f"schedule horizon {s.T} differs from market horizon {params.horizon}")
    if isinstance(s, ConstantSchedule):
        # the ODE started at w(c) = 0 stays at zero
        return constant_threshold(s.c, s.T)
    v0 = s.terminal_price
    w0 = s.first_time_at_terminal
    integ = _Integrator(s, params.lam, cfg)
    vs, ws, hit_zero = integ.run(v0, w0, cfg.step)
    upper = float(vs[-1]) if hit_zero else 1.0
    delta = math.nan
    if cfg.check_halving and vs.size > 1:
        vs2, ws2, hit2 = integ.run(v0, w0, 0.5 * cfg.step)
        fine = ThresholdFunction(
            vs2, ws2, v0, float(vs2[-1]) if hit2 else 1.0, Provenance.ODE, s.T
        )
        common = vs[vs <= vs2[-1]]
        delta = float(np.max(np.abs(fine(common) - ws[: common.size]))) if common.size else 0.0
        if delta > cfg.richardson_tol:
            log.warning("step halving changed w by %.3g (> %.3g)", delta, cfg.richardson_tol)
    near_boundary = (not hit_zero) and vs.size > 1
    return ThresholdFunction(
        v=vs,
        w=ws,
        lower_cutoff=v0,
        upper_cutoff=upper,
        provenance=Provenance.ODE,
        horizon=s.T,
        step=cfg.step,
        step_halving_change=delta,
        near_boundary_flag=near_boundary,
    )


def invert_threshold(w: ThresholdFunction, t):
    return w.inverse(t)


def _survival(w: ThresholdFunction, lam: float, t):
    """Probability that the item is still unsold at ``t``."""
    t = np.asarray(t, dtype=float)
    out = np.exp(-lam * t * (1.0 - w.inverse(t)))
    return float(out) if out.ndim == 0 else out


def verify_equilibrium(
    w: ThresholdFunction,
    s: PriceSchedule,
    params: MarketParams,
    cfg: VerifyConfig | None = None,
) -> VerificationReport:
    """Check rationality, connectedness of the buyer's argmax, and the FOC.

    Failures are reported, never raised.  The argmax check also requires the
    threshold time itself to attain the maximum, up to
    ``cfg.best_response_tol``.
    """
    cfg = cfg or VerifyConfig()
    lam, T = params.lam, s.T
    offending: set[float] = set()

    finite = np.isfinite(w.w)
    vs, ws = w.v[finite], w.w[finite]
    margin = s.price(np.clip(ws, 0.0, T)) - vs
    bad = margin > cfg.rationality_tol
    rationality_ok = not bool(np.any(bad))
    offending.update(float(x) for x in vs[bad][:20])

    taus = np.linspace(0.0, T, cfg.tau_points)
    surv = _survival(w, lam, taus)
    prices = s.price(taus)
    v_lo = s.terminal_price
    samples = v_lo + (1.0 - v_lo) * np.arange(cfg.n_valuations) / cfg.n_valuations
    connected_ok = True
    for v in samples:
        pi = (v - prices) * surv
        top = float(pi.max())
        scale = max(abs(top), 1e-300)
        idx = np.flatnonzero(pi >= top - cfg.plateau_tol * scale)
        contiguous = idx[-1] - idx[0] + 1 == idx.size
        target = w(v)
        attains = True
        if math.isfinite(target):
            pi_target = (v - s.price(target)) * _survival(w, lam, target)
            # measured against the spread of Pi so a near-zero maximum does not
            # turn interpolation noise into a failure; the floor absorbs rounding
            spread = max(abs(top), top - float(pi.min()))
            attains = pi_target >= top - max(cfg.best_response_tol * spread, 1e-12)
        if not (contiguous and attains):
            connected_ok = False
            offending.add(float(v))

    foc = 0.0
    for v in samples:
        target = w(v)
        if not (w.lower_cutoff < v < w.upper_cutoff) or not (0.0 < target < T):
            continue
        # keep the stencil well inside the horizon where w^{-1} is steep
        h = min(cfg.fd_step, 0.1 * target, 0.1 * (T - target))
        pis = [(v - s.price(t)) * _survival(w, lam, t) for t in (target - h, target + h)]
        foc = max(foc, abs(pis[1] - pis[0]) / (2 * h))
    return VerificationReport(
        rationality_ok=rationality_ok,
        connected_argmax_ok=connected_ok,
        max_foc_residual=foc,
        offending_valuations=sorted(offending),
    )
