"""Parameter sweeps over schedule families and efficient-frontier selection.

Each grid point is pushed through the full pipeline (threshold construction,
verification, payoffs).  Points that fail are kept with flags so that plots
can show the holes, but they never take part in optimisation.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .benchmarks import thick_optimal_linear, thin_optimal_constant
from .equilibrium import SolverConfig, VerifyConfig, construct_threshold, verify_equilibrium
from .errors import EmptyResultError, ParameterError, PricerError
from .payoffs import QUAD_TOL, SellerOutcome, constant_closed_form, evaluate
from .schedules import (
    ConstantSchedule,
    Family,
    LinearSchedule,
    MarketParams,
    PolynomialSchedule,
    PriceSchedule,
    make_quasi_auction,
)

log = logging.getLogger(__name__)

PARAM_COLUMNS = ("c", "b", "m", "r", "alpha")

_FAMILY_PARAMS = {
    Family.CONSTANT: ("c",),
    Family.LINEAR: ("m",),
    Family.POLYNOMIAL: ("r", "alpha"),
    Family.QUASI_AUCTION: ("alpha",),
}


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian grid over one family's free parameters.

    ``grid`` maps parameter names to value lists.  Linear schedules start at
    ``b = 1`` unless ``b`` is in the grid; the quasi-auction reserve comes
    from ``params``.
    """

    family: Family
    grid: dict
    params: MarketParams

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        allowed = set(_FAMILY_PARAMS[family]) | ({"b"} if family is Family.LINEAR else set())
        unknown = set(self.grid) - allowed
        missing = set(_FAMILY_PARAMS[family]) - set(self.grid)
        if unknown or missing:
            raise ParameterError(
                f"{family.value} grid needs {sorted(_FAMILY_PARAMS[family])}, "
                f"got {sorted(self.grid)}"
            )
        grid = {k: tuple(float(x) for x in self.grid[k]) for k in sorted(self.grid)}
        if any(len(v) == 0 for v in grid.values()):
            raise ParameterError(f"{family.value} grid has an empty parameter list")
        object.__setattr__(self, "grid", grid)

    def schedules(self) -> list[PriceSchedule]:
        """Schedules in grid order; raises on any invalid combination."""
        names = list(self.grid)
        T = self.params.horizon
        out = []
        for combo in itertools.product(*(self.grid[n] for n in names)):
            kw = dict(zip(names, combo))
            out.append(_build(self.family, kw, self.params, T))
        return out


def _build(family: Family, kw: dict, params: MarketParams, T: float) -> PriceSchedule:
    if family is Family.CONSTANT:
        return ConstantSchedule(kw["c"], T)
    if family is Family.LINEAR:
        return LinearSchedule(kw.get("b", 1.0), kw["m"], T)
    if family is Family.POLYNOMIAL:
        return PolynomialSchedule(kw["r"], kw["alpha"], T)
    return make_quasi_auction(params, kw["alpha"])


@dataclass(frozen=True)
class FrontierPoint:
    schedule: PriceSchedule
    revenue: float = math.nan
    wait: float = math.nan
    utility: float = math.nan
    verification_passed: bool = False
    construction_failed: bool = False
    message: str = ""

    @property
    def family(self) -> Family:
        return self.schedule.family

    @property
    def usable(self) -> bool:
        return self.verification_passed and not self.construction_failed

    def at_beta(self, beta: float) -> "FrontierPoint":
        if self.construction_failed:
            return self
        return replace(self, utility=self.revenue - beta * self.wait)

    def csv_row(self, precision: int = 12) -> str:
        d = self.schedule.to_dict()
        cells = [self.family.value]
        cells += [_fmt(d[k], precision) if k in d else "" for k in PARAM_COLUMNS]
        cells += [_fmt(x, precision) for x in (self.revenue, self.wait, self.utility)]
        cells += [str(self.verification_passed).lower(), str(self.construction_failed).lower()]
        return ",".join(cells)

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule.to_dict(),
            "revenue": _none_if_nan(self.revenue),
            "wait": _none_if_nan(self.wait),
            "utility": _none_if_nan(self.utility),
            "verified": self.verification_passed,
            "failed": self.construction_failed,
            "message": self.message,
        }


CSV_HEADER = "family," + ",".join(PARAM_COLUMNS) + ",revenue,wait,utility,verified,failed"


def _fmt(x: float, precision: int) -> str:
    return "" if math.isnan(x) else f"{x:.{precision}g}"


def _none_if_nan(x: float):
    return None if math.isnan(x) else x


@dataclass(frozen=True)
class PipelineConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    quad_tol: float = QUAD_TOL


def evaluate_point(
    s: PriceSchedule, params: MarketParams, cfg: PipelineConfig | None = None
) -> FrontierPoint:
    """Run one schedule through construction, verification and payoffs."""
    cfg = cfg or PipelineConfig()
    if isinstance(s, ConstantSchedule):
        o = constant_closed_form(s.c, params)
        return FrontierPoint(s, o.revenue, o.wait, o.utility, True, False)
    try:
        w = construct_threshold(s, params, cfg.solver)
        report = verify_equilibrium(w, s, params, cfg.verify)
        o = evaluate(w, s, params, cfg.quad_tol)
    except PricerError as exc:
        log.info("%s %s failed: %s", s.family.value, s.describe(), exc)
        return FrontierPoint(s, construction_failed=True, message=str(exc))
    msg = "" if report.passed else "verification failed"
    return FrontierPoint(s, o.revenue, o.wait, o.utility, report.passed, False, msg)


def _evaluate_task(args):
    return evaluate_point(*args)


def sweep(
    spec: SweepSpec, cfg: PipelineConfig | None = None, jobs: int = 1
) -> list[FrontierPoint]:
    """Evaluate every grid point; results keep grid order whatever ``jobs`` is."""
    return evaluate_many(spec.schedules(), spec.params, cfg, jobs)


def evaluate_many(
    schedules: list[PriceSchedule],
    params: MarketParams,
    cfg: PipelineConfig | None = None,
    jobs: int = 1,
) -> list[FrontierPoint]:
    cfg = cfg or PipelineConfig()
    tasks = [(s, params, cfg) for s in schedules]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            return list(pool.map(_evaluate_task, tasks, chunksize=4))
    return [_evaluate_task(t) for t in tasks]


def pareto_filter(points: list[FrontierPoint]) -> list[FrontierPoint]:
    """Usable points not dominated in (higher revenue, lower wait), by wait ascending."""
    usable = [p for p in points if p.usable]
    usable.sort(key=lambda p: (p.wait, -p.revenue))
    out: list[FrontierPoint] = []
    best = -math.inf
    for p in usable:
        if p.revenue > best:
            out.append(p)
            best = p.revenue
    return out


def best_point(points: list[FrontierPoint], beta: float) -> FrontierPoint:
    """Maximiser of ``revenue - beta * wait`` among usable points; ties go to the shorter wait."""
    usable = [p for p in points if p.usable]
    if not usable:
        raise EmptyResultError("no verified frontier point")
    return max(usable, key=lambda p: (p.revenue - beta * p.wait, -p.wait))


def benchmark_gap(points: list[FrontierPoint], beta: float, benchmark: SellerOutcome) -> float:
    """``U_best - U_benchmark``; positive when the sweep beats the benchmark."""
    best = best_point(points, beta)
    return (best.revenue - beta * best.wait) - benchmark.utility


# Default grids: 64 points per one-parameter family, 12 x 12 for the
# two-parameter polynomial family.
def default_grids(params: MarketParams) -> list[SweepSpec]:
    specs = [
        SweepSpec(Family.CONSTANT, {"c": np.linspace(0.0, 1.0, 65)}, params),
        SweepSpec(Family.LINEAR, {"m": np.geomspace(0.05, 400.0, 64)}, params),
        SweepSpec(
            Family.POLYNOMIAL,
            {"r": np.linspace(0.0, 0.9, 12), "alpha": np.geomspace(0.25, 64.0, 12)},
            params,
        ),
    ]
    if params.lam * params.horizon > 1.0:
        specs.append(SweepSpec(Family.QUASI_AUCTION, {"alpha": np.geomspace(1.0, 128.0, 64)}, params))
    return specs


@dataclass(frozen=True)
class Preset:
    lam: float
    betas: tuple[float, ...]
    horizon: float = 1.0


PRESETS = {
    "thin": Preset(1.0, (2.0,)),
    "thick": Preset(200.0, (20.0,)),
    "beta_sensitivity": Preset(10.0, (0.1, 1.0, 2.5)),
    "moderate": Preset(20.0, (0.1, 1.0, 5.0)),
}


@dataclass
class BetaSummary:
    beta: float
    points: list[FrontierPoint]
    best: FrontierPoint
    pareto: list[FrontierPoint]
    benchmarks: dict

    @property
    def winner(self) -> Family:
        return self.best.family

    def to_dict(self) -> dict:
        best = self.best
        return {
            "beta": self.beta,
            "winner": self.winner.value,
            "best": best.to_dict(),
            "best_per_family": {
                f.value: p.to_dict() for f, p in best_per_family(self.points, self.beta).items()
            },
            "benchmarks": self.benchmarks,
            "pareto_size": len(self.pareto),
        }


def best_per_family(points: list[FrontierPoint], beta: float) -> dict:
    out = {}
    for family in Family:
        members = [p for p in points if p.family is family]
        try:
            out[family] = best_point(members, beta)
        except EmptyResultError:
            pass
    return out


def _benchmarks(points, params: MarketParams, cfg: PipelineConfig) -> dict:
    """Utility of both analytic benchmarks under the full model and their gap to the best point."""
    out = {}
    best = best_point(points, params.beta)
    u_best = best.revenue - params.beta * best.wait
    if params.lam > 0:
        thin = thin_optimal_constant(params)
        o = constant_closed_form(thin.c_star, params)
        out["constant"] = _gap_entry({"c": thin.c_star}, o.utility, u_best)
    s = thick_optimal_linear(params)
    p = evaluate_point(s, params, cfg)
    if p.construction_failed:
        out["linear"] = {"schedule": s.to_dict(), "failed": True, "message": p.message}
    else:
        out["linear"] = _gap_entry(s.to_dict(), p.utility, u_best)
        out["linear"]["verified"] = p.verification_passed
    return out


def _gap_entry(schedule: dict, utility: float, u_best: float) -> dict:
    gap = u_best - utility
    return {
        "schedule": schedule,
        "utility": utility,
        "gap": gap,
        "relative_gap": gap / abs(u_best) if u_best != 0 else math.inf,
    }


def run_frontier(
    params: MarketParams,
    betas,
    specs: list[SweepSpec] | None = None,
    cfg: PipelineConfig | None = None,
    jobs: int = 1,
) -> list[BetaSummary]:
    """Sweep once, then select the tangency point and benchmark gaps for each ``beta``.

    Revenue and wait do not depend on ``beta``, so the sweep is shared.
    """
    cfg = cfg or PipelineConfig()
    specs = specs if specs is not None else default_grids(params)
    schedules = [s for spec in specs for s in spec.schedules()]
    base = evaluate_many(schedules, params, cfg, jobs)
    out = []
    for beta in betas:
        p_beta = params.with_beta(float(beta))
        points = [p.at_beta(p_beta.beta) for p in base]
        best = best_point(points, p_beta.beta)
        out.append(
            BetaSummary(
                beta=p_beta.beta,
                points=points,
                best=best,
                pareto=pareto_filter(points),
                benchmarks=_benchmarks(points, p_beta, cfg),
            )
        )
    return out


def frontier_csv(points: list[FrontierPoint], precision: int = 12) -> str:
    return "\n".join([CSV_HEADER, *(p.csv_row(precision) for p in points)]) + "\n"
