"""Command-line entry point: ``expiry-pricer {solve,verify,frontier,simulate,benchmark}``.

Every command reads an optional JSON config (``--config``), writes its
artifacts into ``--out`` and prints a JSON summary on standard output.
Floats are written with 12 significant digits.

Exit codes: 0 success, 1 config error, 2 construction failure,
3 verification failure, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .benchmarks import benchmark_report
from .equilibrium import (
    SolverConfig,
    VerifyConfig,
    construct_threshold,
    verify_equilibrium,
)
from .errors import ConstructionError, EmptyResultError, NumericError, ParameterError
from .frontier import PRESETS, PipelineConfig, SweepSpec, frontier_csv, run_frontier
from .payoffs import QUAD_TOL, evaluate
from .schedules import Family, MarketParams, schedule_from_dict
from .simulation import SimConfig, estimate

log = logging.getLogger("expiry_pricer")

EXIT_OK, EXIT_CONFIG, EXIT_CONSTRUCTION, EXIT_VERIFICATION, EXIT_NUMERIC = range(5)
PRECISION = 12
FORMATS = ("json", "csv", "svg")
_SECTIONS = {"market", "schedule", "solver", "verify", "quadrature", "simulation", "frontier", "output"}
_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class ConfigError(ParameterError):
    pass


# ---------------------------------------------------------------- config


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return data


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    return sec


def _dataclass_from(cls, data: dict, name: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad '{name}' section: {exc}") from None


def market_params(cfg: dict) -> MarketParams:
    sec = _section(cfg, "market")
    unknown = set(sec) - {"lambda", "beta", "T"}
    if unknown:
        raise ConfigError(f"unknown keys in 'market': {sorted(unknown)}")
    if "lambda" not in sec:
        raise ConfigError("'market' needs 'lambda'")
    try:
        return MarketParams(float(sec["lambda"]), float(sec.get("beta", 0.0)), float(sec.get("T", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'market' section: {exc}") from None


def schedule(cfg: dict, params: MarketParams):
    if "schedule" not in cfg:
        raise ConfigError("config needs a 'schedule' section")
    data = dict(_section(cfg, "schedule"))
    data.setdefault("T", params.horizon)
    if data.get("family") == Family.QUASI_AUCTION.value and "r" not in data:
        data.setdefault("lambda", params.lam)
    return schedule_from_dict(data)


def pipeline_config(cfg: dict, check_halving: bool = False) -> PipelineConfig:
    solver = dict(_section(cfg, "solver"))
    solver.setdefault("check_halving", check_halving)
    quad = _section(cfg, "quadrature")
    if set(quad) - {"tol"}:
        raise ConfigError(f"unknown keys in 'quadrature': {sorted(set(quad) - {'tol'})}")
    return PipelineConfig(
        solver=_dataclass_from(SolverConfig, solver, "solver"),
        verify=_dataclass_from(VerifyConfig, _section(cfg, "verify"), "verify"),
        quad_tol=float(quad.get("tol", QUAD_TOL)),
    )


def _grid_values(spec, where: str) -> list[float]:
    if isinstance(spec, list):
        return [float(x) for x in spec]
    if isinstance(spec, dict) and len(spec) == 1:
        ((kind, args),) = spec.items()
        if kind in ("linspace", "geomspace") and isinstance(args, list) and len(args) == 3:
            lo, hi, n = float(args[0]), float(args[1]), int(args[2])
            return list(getattr(np, kind)(lo, hi, n))
    raise ConfigError(f"grid for {where} must be a list or {{'linspace'|'geomspace': [lo, hi, n]}}")


# ---------------------------------------------------------------- output


def canonical(obj):
    """Round floats to 12 significant digits; non-finite values become strings."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{PRECISION}g}")
    return obj


def dumps(obj) -> str:
    return json.dumps(canonical(obj), indent=2, sort_keys=True) + "\n"


class Output:
    def __init__(self, directory: str, fmt: str):
        self.dir = Path(directory)
        self.fmt = fmt
        self.written: list[str] = []

    def path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.written.append(name)
        return p

    def text(self, name: str, text: str):
        self.path(name).write_text(text)

    def json(self, name: str, obj):
        self.text(name, dumps(obj))


# ---------------------------------------------------------------- commands


def cmd_solve(cfg: dict, args, out: Output) -> tuple[int, dict]:
    params = market_params(cfg)
    s = schedule(cfg, params)
    pipe = pipeline_config(cfg, check_halving=True)
    w = construct_threshold(s, params, pipe.solver)
    report = verify_equilibrium(w, s, params, pipe.verify)
    summary = {
        "schedule": s.to_dict(),
        "lower_cutoff": w.lower_cutoff,
        "upper_cutoff": w.upper_cutoff,
        "provenance": w.provenance.value,
        "max_foc_residual": report.max_foc_residual,
        "near_boundary_flag": w.near_boundary_flag,
        "step_halving_change": w.step_halving_change,
        "grid_points": int(w.v.size),
    }
    if out.fmt == "json":
        out.json("threshold.json", w.to_dict())
    else:
        out.text("threshold.csv", w.to_csv(PRECISION))
    if out.fmt == "svg":
        from .plotting import threshold_figure

        threshold_figure(w, out.path("threshold.svg"), title=s.describe())
    out.json("solve_summary.json", summary)
    return EXIT_OK, summary


def cmd_verify(cfg: dict, args, out: Output) -> tuple[int, dict]:
    params = market_params(cfg)
    s = schedule(cfg, params)
    pipe = pipeline_config(cfg)
    w = construct_threshold(s, params, pipe.solver)
    report = verify_equilibrium(w, s, params, pipe.verify)
    result = {"schedule": s.to_dict(), **report.to_dict()}
    out.json("verification.json", result)
    return (EXIT_OK if report.passed else EXIT_VERIFICATION), result


def cmd_simulate(cfg: dict, args, out: Output) -> tuple[int, dict]:
    params = market_params(cfg)
    s = schedule(cfg, params)
    pipe = pipeline_config(cfg)
    sim = dict(_section(cfg, "simulation"))
    if args.seed is not None:
        sim["seed"] = args.seed
    if args.replications is not None:
        sim["replications"] = args.replications
    sim.setdefault("replications", 100_000)
    sim_cfg = _dataclass_from(SimConfig, sim, "simulation")
    w = construct_threshold(s, params, pipe.solver)
    est = estimate(s, w, params, sim_cfg, jobs=args.jobs)
    analytic = evaluate(w, s, params, pipe.quad_tol)
    result = {**est.to_dict(), "schedule": s.to_dict(), "quadrature": analytic.to_dict()}
    if out.fmt == "csv":
        keys = ["mean_revenue", "se_revenue", "mean_wait", "se_wait", "sale_fraction", "replications", "seed"]
        row = canonical([result[k] for k in keys])
        out.text("simulation.csv", ",".join(keys) + "\n" + ",".join(str(x) for x in row) + "\n")
    else:
        out.json("simulation.json", result)
    return EXIT_OK, result


def cmd_benchmark(cfg: dict, args, out: Output) -> tuple[int, dict]:
    params = market_params(cfg)
    pipe = pipeline_config(cfg)
    report = benchmark_report(params, pipe.solver)
    out.json("benchmark.json", report)
    return EXIT_OK, report


def _frontier_setup(cfg: dict, args):
    sec = dict(_section(cfg, "frontier"))
    preset = args.preset or sec.pop("preset", None)
    sec.pop("preset", None)
    unknown = set(sec) - {"lambda", "betas", "T", "grids"}
    if unknown:
        raise ConfigError(f"unknown keys in 'frontier': {sorted(unknown)}")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        p = PRESETS[preset]
        lam, betas, T = p.lam, p.betas, p.horizon
    else:
        if "lambda" not in sec or "betas" not in sec:
            raise ConfigError("'frontier' needs a 'preset' or both 'lambda' and 'betas'")
        lam, betas, T = sec["lambda"], sec["betas"], sec.get("T", 1.0)
    try:
        params = MarketParams(float(lam), 0.0, float(T))
        betas = [float(b) for b in betas]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'frontier' section: {exc}") from None
    if not betas:
        raise ConfigError("'betas' must not be empty")
    specs = None
    if "grids" in sec:
        grids = sec["grids"]
        if not isinstance(grids, dict) or not grids:
            raise ConfigError("'grids' must be a non-empty object keyed by family")
        specs = []
        for family in sorted(grids):
            try:
                fam = Family(family)
            except ValueError:
                raise ConfigError(f"unknown family {family!r} in 'grids'") from None
            axes = {k: _grid_values(v, f"{family}.{k}") for k, v in grids[family].items()}
            specs.append(SweepSpec(fam, axes, params))
    return preset or "custom", params, betas, specs


def cmd_frontier(cfg: dict, args, out: Output) -> tuple[int, dict]:
    label, params, betas, specs = _frontier_setup(cfg, args)
    pipe = pipeline_config(cfg)
    summaries = run_frontier(params, betas, specs, pipe, jobs=args.jobs)
    points = summaries[0].points
    result = {
        "label": label,
        "lambda": params.lam,
        "T": params.horizon,
        "points": len(points),
        "verified": sum(p.usable for p in points),
        "failed": sum(p.construction_failed for p in points),
        "betas": [s.to_dict() for s in summaries],
    }
    for s in summaries:
        stem = f"frontier_{label}_beta{s.beta:g}"
        if out.fmt == "json":
            out.json(stem + ".json", {"beta": s.beta, "points": [p.to_dict() for p in s.points]})
        else:
            out.text(stem + ".csv", frontier_csv(s.points, PRECISION))
        if out.fmt == "svg":
            from .plotting import frontier_figure

            title = f"lambda={params.lam:g}, beta={s.beta:g}"
            frontier_figure(s, out.path(stem + ".svg"), title=title)
    out.json(f"frontier_{label}_summary.json", result)
    return EXIT_OK, result


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "frontier": cmd_frontier,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
}


# ---------------------------------------------------------------- entry


def _u64(text: str) -> int:
    value = int(text, 0)
    if not (0 <= value < 1 << 64):
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expiry-pricer",
        description="Equilibrium thresholds, payoffs and efficient frontiers for expiring-item pricing.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="output directory (default: config output.dir or 'out')")
    parser.add_argument("--format", choices=FORMATS, help="artifact format (default json)")
    parser.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    parser.add_argument("--seed", type=_u64, help="simulation seed")
    parser.add_argument("--replications", type=_positive_int, help="simulation replications")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="frontier regime preset")
    return parser


def _setup_logging():
    name = os.environ.get("EXPIRY_PRICER_LOG", "warn").lower()
    level = _LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("expiry_pricer").setLevel(level)
    if name not in _LOG_LEVELS:
        log.warning("unknown EXPIRY_PRICER_LOG=%r, using 'warn'", name)


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        output = _section(cfg, "output")
        if set(output) - {"dir", "format"}:
            raise ConfigError(f"unknown keys in 'output': {sorted(set(output) - {'dir', 'format'})}")
        fmt = args.format or output.get("format", "json")
        if fmt not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {fmt!r}")
        out = Output(args.out or output.get("dir", "out"), fmt)
        code, result = COMMANDS[args.command](cfg, args, out)
        log.info("%s wrote %s", args.command, ", ".join(out.written) or "nothing")
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConstructionError as exc:
        where = f" at v={exc.valuation:.12g}" if exc.valuation is not None else ""
        print(f"construction failed{where}: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    except EmptyResultError as exc:
        print(f"no verified result: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION
    except NumericError as exc:
        print(f"numeric failure: {exc} (estimate {exc.estimate})", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(dumps(result))
    if code == EXIT_VERIFICATION:
        print("verification failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
