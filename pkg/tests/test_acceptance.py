"""Acceptance criteria, one test each.

Every test prints a single ``[criterion N] PASS|FAIL`` line with the measured
quantities before asserting at the stated tolerance.  Criteria that the model
does not meet are strict xfails: they keep their thresholds and turn into an
error if they ever start passing.
"""

import itertools
import time

import numpy as np
import pytest

from expiry_pricer.benchmarks import (
    benchmark_report,
    full_model_utility_slope,
    thin_optimal_constant,
)
from expiry_pricer.cli import main
from expiry_pricer.equilibrium import SolverConfig, constant_threshold, construct_threshold, ode_rhs
from expiry_pricer.frontier import run_frontier
from expiry_pricer.payoffs import (
    constant_closed_form,
    evaluate,
    expected_revenue,
    expected_waiting_time,
    survival_probability,
)
from expiry_pricer.schedules import (
    ConstantSchedule,
    Family,
    LinearSchedule,
    MarketParams,
    PolynomialSchedule,
    make_quasi_auction,
)
from expiry_pricer.simulation import SimConfig, empirical_survival, estimate

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return _report


def _oracle_cases():
    return [
        (ConstantSchedule(0.5), MarketParams(1, 0)),
        (LinearSchedule(1, 1), MarketParams(5, 0)),
        (PolynomialSchedule(0.2, 2), MarketParams(10, 0)),
        (make_quasi_auction(MarketParams(20, 0), 4), MarketParams(20, 0)),
    ]


def _threshold(s, p):
    if isinstance(s, ConstantSchedule):
        return constant_threshold(s.c, s.T)
    return construct_threshold(s, p)


def test_criterion_1_constant_closed_form(report):
    start = time.perf_counter()
    worst = 0.0
    for c, lam, T in itertools.product(np.arange(1, 10) / 10, (0.5, 1, 10), (0.5, 1, 2)):
        p = MarketParams(lam, 0, T)
        s, w = ConstantSchedule(float(c), T), constant_threshold(float(c), T)
        o = constant_closed_form(float(c), p)
        worst = max(
            worst,
            abs(expected_revenue(w, s, p)[0] - o.revenue),
            abs(expected_waiting_time(w, p, s)[0] - o.wait),
        )
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-8 and elapsed < 1.0, f"max |quad - closed| = {worst:.2e} (tol 1e-8), {elapsed:.2f} s (< 1 s)")


def test_criterion_2_monte_carlo_oracle(report):
    start = time.perf_counter()
    lines, ok = [], True
    for i, (s, p) in enumerate(_oracle_cases()):
        w = _threshold(s, p)
        o = evaluate(w, s, p)
        e = estimate(s, w, p, SimConfig(1_000_000, seed=20 + i))
        zr = abs(e.mean_revenue - o.revenue) / e.se_revenue
        zw = abs(e.mean_wait - o.wait) / e.se_wait
        ok &= zr < 3 and zw < 3
        lines.append(f"{s.family.value} z_rev={zr:.2f} z_wait={zw:.2f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    report(2, ok, "; ".join(lines) + f" (< 3 SE), {elapsed:.1f} s (< 60 s)")


def test_criterion_3_ode_self_consistency(report):
    cfg = SolverConfig(check_halving=True)
    tol = max(1e-4, 10 * cfg.step)
    worst_res = worst_half = 0.0
    for s, p in _oracle_cases()[1:] + [(LinearSchedule(1, 20), MarketParams(200, 0))]:
        w = construct_threshold(s, p, cfg)
        v, t = w.v, w.w
        fd = (t[2:] - t[:-2]) / (v[2:] - v[:-2])
        rhs = np.array([ode_rhs(a, b, s, p.lam) for a, b in zip(v[1:-1], t[1:-1])])
        worst_res = max(worst_res, float(np.max(np.abs(fd - rhs))))
        worst_half = max(worst_half, w.step_halving_change)
    report(
        3,
        worst_res <= tol and worst_half < 1e-6,
        f"max residual {worst_res:.2e} (tol {tol:.0e}), step-halving change {worst_half:.2e} (< 1e-6)",
    )


def test_criterion_4_survival_curve(report):
    times = [0.25, 0.5, 0.75]
    worst, ok = 0.0, True
    for i, (s, p) in enumerate(_oracle_cases()):
        w = _threshold(s, p)
        for t, frac, se in empirical_survival(s, w, p, SimConfig(1_000_000, seed=40 + i), times):
            exact = survival_probability(w, p.lam, t)
            if se == 0:
                ok &= frac == exact
                continue
            z = abs(frac - exact) / se
            worst = max(worst, z)
            ok &= z < 3
    report(4, ok, f"worst deviation {worst:.2f} binomial SE over 4 schedules x 3 times (< 3)")


LAMS = [0.5, 1, 2, 5, 10]
BETAS = [0.5, 1, 2, 4]
TS = [0.5, 1, 2]


def _static_violations():
    roots = {k: thin_optimal_constant(MarketParams(*k)) for k in itertools.product(LAMS, BETAS, TS)}
    axes = [LAMS, BETAS, TS]
    counts = []
    for axis, increasing in ((0, True), (1, False), (2, True)):
        n = 0
        for key, a in roots.items():
            i = axes[axis].index(key[axis])
            if i + 1 == len(axes[axis]):
                continue
            nxt = list(key)
            nxt[axis] = axes[axis][i + 1]
            b = roots[tuple(nxt)]
            if a.clamped or b.clamped:
                continue
            n += (b.c_hat > a.c_hat) != increasing
        counts.append(n)
    return counts


@pytest.mark.xfail(
    strict=True,
    reason="the thin-market root decreases with T at small lambda; the other parts of the criterion hold",
)
def test_criterion_5_thin_market_root(report):
    p = MarketParams(1, 2)
    sol = thin_optimal_constant(p)
    cs = np.round(np.arange(0, 1001) * 1e-3, 12)
    u = [constant_closed_form(float(c), p).utility for c in cs]
    c_grid = float(cs[int(np.argmax(u))])
    c_opt = benchmark_report(p)["thin"]["c_full_model_opt"]
    grid_ok = abs(c_grid - c_opt) <= 2e-3 and abs(full_model_utility_slope(c_opt, p)) < 1e-8
    v_lam, v_beta, v_T = _static_violations()
    ok = sol.residual <= 1e-12 and grid_ok and v_lam == v_beta == v_T == 0
    report(
        5,
        ok,
        f"|F(c_hat)| = {sol.residual:.1e} at c_hat = {sol.c_hat:.6f}; grid argmax {c_grid:.3f} vs "
        f"full-model critical point {c_opt:.5f}; violations lambda={v_lam} beta={v_beta} T={v_T}",
    )


@pytest.mark.xfail(
    strict=True,
    reason="buyers who wait lower the linear schedule's revenue; the best constant price is ~29% better",
)
def test_criterion_6_thick_market(report):
    p = MarketParams(200, 0)
    start = time.perf_counter()
    (summary,) = run_frontier(p, [20.0])
    elapsed = time.perf_counter() - start
    lin = summary.benchmarks["linear"]
    best = summary.best
    ok = lin["relative_gap"] <= 0.02 and elapsed < 600
    report(
        6,
        ok,
        f"best {best.family.value} {best.schedule.describe()} U={best.utility:.5f}; linear m=20 "
        f"U={lin['utility']:.5f}; relative gap {lin['relative_gap']:.2%} (<= 2%), {elapsed:.0f} s",
    )


def test_criterion_7_thin_market(report):
    (summary,) = run_frontier(MarketParams(1, 0), [2.0])
    const = summary.benchmarks["constant"]
    ok = summary.winner is Family.CONSTANT and const["relative_gap"] <= 0.02
    report(
        7,
        ok,
        f"winner {summary.winner.value} {summary.best.schedule.describe()} U={summary.best.utility:.6f}; "
        f"constant benchmark c={const['schedule']['c']:.4f} relative gap {const['relative_gap']:.2%} (<= 2%)",
    )


@pytest.mark.xfail(
    strict=True,
    reason="at lambda=10 polynomial wins at beta=0.1 and constant wins at beta=2.5",
)
def test_criterion_8_beta_transition(report):
    summaries = run_frontier(MarketParams(10, 0), [0.1, 1.0, 2.5])
    winners = [s.winner for s in summaries]
    expected = [Family.QUASI_AUCTION, Family.CONSTANT, Family.LINEAR]
    detail = "; ".join(
        f"beta={s.beta:g}: {s.winner.value} {s.best.schedule.describe()} U={s.best.utility:.5f}"
        for s in summaries
    )
    report(8, winners == expected, detail + " (expected quasi_auction, constant, linear)")


def _cli_run(tmp_path, tag, command, cfg_path, *extra):
    out = tmp_path / tag
    code = main([command, "--config", str(cfg_path), "--out", str(out), *extra])
    files = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    return code, files


def test_criterion_9_determinism(report, tmp_path, capsys):
    import json

    configs = {
        "solve": {"market": {"lambda": 5}, "schedule": {"family": "linear", "b": 1, "m": 1}},
        "verify": {"market": {"lambda": 10}, "schedule": {"family": "polynomial", "r": 0.2, "alpha": 2}},
        "benchmark": {"market": {"lambda": 1, "beta": 2}},
        "simulate": {"market": {"lambda": 20}, "schedule": {"family": "quasi_auction", "alpha": 4}},
        "frontier": {"frontier": {"preset": "thin"}},
    }
    extra = {
        "solve": ["--format", "svg"],
        "simulate": ["--seed", "12345", "--replications", "300000"],
        "frontier": ["--format", "svg"],
    }
    parallel = {"simulate", "frontier"}
    results = []
    for command, cfg in configs.items():
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(cfg))
        runs = []
        for tag, jobs in (("a", 1), ("b", 1), ("c", 8)):
            if jobs > 1 and command not in parallel:
                continue
            code, files = _cli_run(tmp_path, f"{command}_{tag}", command, path, "--jobs", str(jobs), *extra.get(command, []))
            runs.append((code, files, capsys.readouterr().out))
        same = all(r == runs[0] for r in runs[1:]) and runs[0][0] == 0
        results.append((command, same, len(runs), len(runs[0][1])))
    ok = all(same for _, same, _, _ in results)
    detail = "; ".join(f"{c}: {n} runs x {k} files {'identical' if s else 'DIFFER'}" for c, s, n, k in results)
    report(9, ok, detail)
