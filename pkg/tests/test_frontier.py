import math

import pytest

from expiry_pricer.errors import EmptyResultError, ParameterError
from expiry_pricer.frontier import (
    CSV_HEADER,
    FrontierPoint,
    PRESETS,
    SweepSpec,
    benchmark_gap,
    best_point,
    default_grids,
    evaluate_point,
    frontier_csv,
    pareto_filter,
    run_frontier,
    sweep,
)
from expiry_pricer.payoffs import SellerOutcome, constant_closed_form
from expiry_pricer.schedules import ConstantSchedule, Family, LinearSchedule, MarketParams


def _pt(rev, wait, verified=True, failed=False, c=0.5):
    return FrontierPoint(ConstantSchedule(c), rev, wait, rev, verified, failed)


def test_constant_sweep_matches_closed_form():
    p = MarketParams(2, 0.5)
    pts = sweep(SweepSpec(Family.CONSTANT, {"c": [0.1, 0.5, 0.9]}, p))
    for pt, c in zip(pts, (0.1, 0.5, 0.9)):
        o = constant_closed_form(c, p)
        assert (pt.revenue, pt.wait, pt.utility) == (o.revenue, o.wait, o.utility)
        assert pt.usable


def test_linear_sweep_verifies():
    p = MarketParams(5, 1)
    pts = sweep(SweepSpec(Family.LINEAR, {"m": [0.5, 1, 2]}, p))
    assert [pt.schedule.m for pt in pts] == [0.5, 1, 2]
    assert all(pt.verification_passed and not pt.construction_failed for pt in pts)
    assert all(pt.utility == pytest.approx(pt.revenue - pt.wait) for pt in pts)


def test_sweep_spec_validation():
    p = MarketParams(1, 0)
    with pytest.raises(ParameterError):
        SweepSpec(Family.LINEAR, {"c": [0.5]}, p)
    with pytest.raises(ParameterError):
        SweepSpec(Family.POLYNOMIAL, {"r": [0.1]}, p)
    with pytest.raises(ParameterError):
        SweepSpec(Family.CONSTANT, {"c": []}, p)
    with pytest.raises(ParameterError):
        SweepSpec(Family.CONSTANT, {"c": [1.5]}, p).schedules()


def test_failed_construction_is_flagged():
    p = MarketParams(5, 0, 2.0)
    pt = evaluate_point(LinearSchedule(1, 1, T=1.0), p)
    assert pt.construction_failed and not pt.usable
    assert math.isnan(pt.revenue) and pt.message


def test_flags_and_beta_rescoring():
    pt = _pt(0.4, 0.2)
    assert pt.at_beta(2).utility == pytest.approx(0.0)
    assert not _pt(0.4, 0.2, verified=False).usable
    failed = _pt(math.nan, math.nan, verified=False, failed=True)
    assert failed.at_beta(3) is failed


def test_pareto_filter_examples():
    a, b, c, d = _pt(0.1, 0.1), _pt(0.3, 0.5), _pt(0.2, 0.6), _pt(0.5, 0.4, verified=False)
    front = pareto_filter([a, b, c, d])
    assert front == [a, b]
    assert pareto_filter(front) == front
    assert pareto_filter([]) == []


def test_best_point_limits():
    a, b = _pt(0.1, 0.05), _pt(0.6, 0.9)
    assert best_point([a, b], 0) is b
    assert best_point([a, b], 1e6) is a
    # exact tie goes to the shorter wait
    assert best_point([_pt(0.3, 0.2), _pt(0.5, 0.4)], 1.0).wait == 0.2
    with pytest.raises(EmptyResultError):
        best_point([_pt(0.5, 0.1, verified=False)], 1)


def test_benchmark_gap_zero_for_identical_point():
    pts = [_pt(0.3, 0.2)]
    assert benchmark_gap(pts, 1.0, SellerOutcome(0.3, 0.2, 0.1)) == pytest.approx(0.0, abs=1e-15)


def test_csv_layout():
    pts = [_pt(0.25, 0.5), FrontierPoint(LinearSchedule(1, 2), construction_failed=True)]
    lines = frontier_csv(pts).splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1] == "constant,0.5,,,,,0.25,0.5,0.25,true,false"
    assert lines[2] == "linear,,1,2,,,,,,false,true"


def test_default_grids():
    fams = [s.family for s in default_grids(MarketParams(1, 0))]
    assert Family.QUASI_AUCTION not in fams
    specs = default_grids(MarketParams(10, 0))
    assert [s.family for s in specs][-1] is Family.QUASI_AUCTION
    assert sum(len(s.schedules()) for s in specs) == 65 + 64 + 144 + 64
    assert set(PRESETS) == {"thin", "thick", "beta_sensitivity", "moderate"}


def test_run_frontier_is_order_and_jobs_independent():
    p = MarketParams(5, 0)
    specs = [
        SweepSpec(Family.CONSTANT, {"c": [0.2, 0.6]}, p),
        SweepSpec(Family.LINEAR, {"m": [1.0, 3.0]}, p),
    ]
    a = run_frontier(p, [0.5, 2.0], specs)
    b = run_frontier(p, [0.5, 2.0], specs, jobs=2)
    c = run_frontier(p, [0.5, 2.0], specs[::-1])
    for x, y, z in zip(a, b, c):
        assert x.points == y.points
        assert x.best == y.best == z.best
        assert x.to_dict() == y.to_dict()
        assert x.best.utility == max(pt.utility for pt in x.points if pt.usable)
    assert set(a[0].benchmarks) == {"constant", "linear"}
