import math
from dataclasses import dataclass

import numpy as np
import pytest

from expiry_pricer.equilibrium import (
    Provenance,
    SolverConfig,
    ThresholdFunction,
    VerifyConfig,
    construct_threshold,
    constant_threshold,
    invert_threshold,
    ode_rhs,
    verify_equilibrium,
)
from expiry_pricer.errors import ParameterError, SingularityError
from expiry_pricer.schedules import (
    ConstantSchedule,
    Family,
    LinearSchedule,
    MarketParams,
    PolynomialSchedule,
    PriceSchedule,
    make_quasi_auction,
)

# reference runs with step 1e-5
FIXTURES = [
    (LinearSchedule(1, 1), 5, 0.6529654613042317, 0.3701459453681865),
    (PolynomialSchedule(0.2, 2), 10, 0.8501021261054021, 0.5309804492861473),
    (make_quasi_auction(MarketParams(20, 0), 4), 20, 0.9972997531710938, 0.7363225091048913),
    (LinearSchedule(1, 20), 200, 0.029270507153017086, 0.013956439217738446),
]


@dataclass(frozen=True)
class FlatEndSchedule(PriceSchedule):
    """``1 - (2t - t^2) / 2``: smooth, decreasing, with zero slope at ``T = 1``."""

    T: float = 1.0
    family = Family.POLYNOMIAL

    def _price(self, t):
        return 1.0 - 0.5 * (2 * t - t * t)

    def _slope(self, t, side):
        return -(1.0 - t)

    def _price1(self, t):
        return 1.0 - 0.5 * (2 * t - t * t)

    def _slope1(self, t, side="right"):
        return -(1.0 - t)


def test_ode_rhs_constant_simplifies():
    assert ode_rhs(0.6, 0.2, ConstantSchedule(0.5), 3) == pytest.approx(0.5, rel=1e-14)


def test_ode_rhs_zero_at_linear_initial_point():
    assert ode_rhs(0.0, 1.0, LinearSchedule(1, 1), 5) == 0.0


@pytest.mark.parametrize("s", [ConstantSchedule(0.3), LinearSchedule(1, 2), PolynomialSchedule(0.2, 3)])
def test_ode_rhs_zero_when_w_is_zero(s):
    assert ode_rhs(0.7, 0.0, s, 4) == 0.0


def test_ode_rhs_singular_denominator():
    with pytest.raises(SingularityError):
        ode_rhs(1.0, 0.3, ConstantSchedule(0.5), 2)


def test_ode_rhs_domain():
    with pytest.raises(ParameterError):
        ode_rhs(0.5, 1.5, LinearSchedule(1, 1), 1)


def test_constant_threshold_is_step_function():
    w = construct_threshold(ConstantSchedule(0.5), MarketParams(1, 0))
    assert w.provenance is Provenance.CONSTANT
    assert w.lower_cutoff == w.upper_cutoff == 0.5
    assert w(0.49) == math.inf
    assert w(0.5) == 0.0
    assert w(0.9) == 0.0


def test_linear_without_arrivals_is_flat():
    w = construct_threshold(LinearSchedule(1, 1), MarketParams(0, 0))
    assert np.all(w.w == 1.0)
    assert w.lower_cutoff == 0.0


def test_linear_initial_condition_is_kink_time():
    w = construct_threshold(LinearSchedule(1, 20), MarketParams(200, 0))
    assert w.w[0] == pytest.approx(0.05, abs=1e-15)
    w = construct_threshold(LinearSchedule(0.9, 0.3, T=2.0), MarketParams(3, 0, 2.0))
    assert w.w[0] == pytest.approx((0.9 - 0.3) / 0.3)


@pytest.mark.parametrize("s, lam, w_half, w_09", FIXTURES)
def test_regression_fixtures(s, lam, w_half, w_09):
    w = construct_threshold(s, MarketParams(lam, 0))
    assert w(0.5) == pytest.approx(w_half, abs=1e-9)
    assert w(0.9) == pytest.approx(w_09, abs=1e-9)
    assert w.lower_cutoff == pytest.approx(s.terminal_price)
    assert w.upper_cutoff == 1.0


@pytest.mark.parametrize("s, lam, _a, _b", FIXTURES)
def test_resubstitution_and_halving(s, lam, _a, _b):
    cfg = SolverConfig(check_halving=True)
    w = construct_threshold(s, MarketParams(lam, 0), cfg)
    v, t = w.v, w.w
    fd = (t[2:] - t[:-2]) / (v[2:] - v[:-2])
    rhs = np.array([ode_rhs(a, b, s, lam) for a, b in zip(v[1:-1], t[1:-1])])
    assert np.max(np.abs(fd - rhs)) < max(1e-4, 10 * cfg.step)
    assert w.step_halving_change < cfg.richardson_tol
    assert np.all(np.diff(t) < 0)


def test_threshold_reaching_zero():
    w = ThresholdFunction(
        v=np.array([0.2, 0.5, 0.8]),
        w=np.array([1.0, 0.4, 0.0]),
        lower_cutoff=0.2,
        upper_cutoff=0.8,
        provenance=Provenance.ODE,
        horizon=1.0,
    )
    assert w.reaches_zero
    assert w(0.9) == 0.0 and w(0.8) == 0.0
    assert w(0.35) == pytest.approx(0.7)
    assert w.inverse(0.0) == 0.8
    assert w.inverse(0.7) == pytest.approx(0.35)
    assert w.inverse(1.0) == 0.2
    assert w.breakpoints() == ()
    assert w.to_csv().splitlines()[-1] == "1,0"


def test_ode_threshold_reaches_zero_where_immediate_purchase_binds():
    # p(0) = 0.5, p' = -0.25, lam = 5: w hits zero where 5 (1 - v)(v - 0.5) = 0.25
    s = LinearSchedule(0.5, 0.25, T=2.0)
    p = MarketParams(5, 0, 2.0)
    w = construct_threshold(s, p, SolverConfig(check_halving=True))
    assert w.reaches_zero and not w.near_boundary_flag
    assert w.upper_cutoff == pytest.approx((1.5 - math.sqrt(0.05)) / 2, abs=1e-7)
    assert w(0.7) == 0.0 and w.inverse(0.0) == w.upper_cutoff
    assert w.step_halving_change < 1e-6
    assert verify_equilibrium(w, s, p).passed


def test_singularity_is_reported():
    with pytest.raises(SingularityError) as info:
        construct_threshold(FlatEndSchedule(), MarketParams(5, 0))
    assert info.value.valuation is not None
    assert info.value.valuation >= 0.5


def test_horizon_mismatch():
    with pytest.raises(ParameterError):
        construct_threshold(LinearSchedule(1, 1, T=2), MarketParams(1, 0, 1.0))


def test_invert_threshold_examples():
    w = constant_threshold(0.5)
    assert invert_threshold(w, np.linspace(0, 1, 5)) == pytest.approx([0.5] * 5)
    lin = construct_threshold(LinearSchedule(1, 1), MarketParams(5, 0))
    assert lin.inverse(0.0) == lin.upper_cutoff
    assert lin.inverse(1.0) == pytest.approx(lin.lower_cutoff)
    assert lin.inverse(lin(0.5)) == pytest.approx(0.5, abs=1e-9)


def test_inverse_is_monotone():
    w = construct_threshold(PolynomialSchedule(0.2, 2), MarketParams(10, 0))
    inv = w.inverse(np.linspace(0, 1, 2001))
    assert np.all(np.diff(inv) <= 0)


def test_verify_constant_passes():
    s = ConstantSchedule(0.5)
    r = verify_equilibrium(constant_threshold(0.5), s, MarketParams(1, 0))
    assert r.passed and r.offending_valuations == []


def test_verify_linear_passes_with_small_foc_residual():
    s = LinearSchedule(1, 1)
    p = MarketParams(5, 0)
    r = verify_equilibrium(construct_threshold(s, p), s, p)
    assert r.passed
    assert r.max_foc_residual < VerifyConfig().foc_tol


def test_verify_flags_irrational_threshold():
    s = PolynomialSchedule(0.2, 8)
    zero = ThresholdFunction(
        v=np.linspace(0, 1, 11),
        w=np.zeros(11),
        lower_cutoff=0.0,
        upper_cutoff=0.0,
        provenance=Provenance.ODE,
        horizon=1.0,
    )
    r = verify_equilibrium(zero, s, MarketParams(1, 0))
    assert not r.rationality_ok
    assert not r.passed
    assert r.offending_valuations


def test_verify_flags_non_best_response():
    # the impatient threshold is not a best response when buyers can wait
    from expiry_pricer.benchmarks import impatient_threshold

    s = LinearSchedule(1, 1)
    p = MarketParams(5, 0)
    r = verify_equilibrium(impatient_threshold(s), s, p)
    assert r.rationality_ok
    assert not r.connected_argmax_ok


def test_threshold_validation():
    with pytest.raises(ParameterError):
        ThresholdFunction(np.array([0.2, 0.1]), np.array([1.0, 0.5]), 0.1, 1.0, Provenance.ODE, 1.0)
    with pytest.raises(ParameterError):
        ThresholdFunction(np.array([0.1, 0.2]), np.array([0.5, 1.0]), 0.1, 1.0, Provenance.ODE, 1.0)
    w = constant_threshold(0.5)
    with pytest.raises(ValueError):
        w.v[0] = 0.0


def test_csv_and_json_forms():
    w = constant_threshold(0.5)
    assert w.to_csv() == "v,w\n0,inf\n0.5,0\n1,0\n"
    d = w.to_dict()
    assert d["provenance"] == "closed_form_constant"
    assert d["lower_cutoff"] == d["upper_cutoff"] == 0.5
    lin = construct_threshold(LinearSchedule(1, 1), MarketParams(5, 0))
    lines = lin.to_csv().splitlines()
    assert lines[0] == "v,w" and lines[1] == "0,1"
    assert lines[-1].startswith("1,")
