"""Monte Carlo play of the market game under a symmetric threshold strategy.

Replications are grouped into fixed-size blocks.  Block ``k`` draws from a
Philox stream keyed by ``(seed, k)``, so the estimate depends only on the
seed and the replication count, never on how blocks are spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .equilibrium import ThresholdFunction
from .errors import ParameterError
from .schedules import MarketParams, PriceSchedule

BLOCK_SIZE = 1 << 16
_MAX_SEED = 1 << 64


@dataclass(frozen=True)
class SimConfig:
    replications: int
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if int(self.replications) != self.replications or self.replications < 1:
            raise ParameterError(f"replications must be a positive integer, got {self.replications}")
        if not (0 <= self.seed < _MAX_SEED):
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass(frozen=True)
class SimEstimate:
    mean_revenue: float
    se_revenue: float
    mean_wait: float
    se_wait: float
    sale_fraction: float
    replications: int
    seed: int
    ties: int = 0

    def to_dict(self) -> dict:
        return {
            "mean_revenue": self.mean_revenue,
            "se_revenue": self.se_revenue,
            "mean_wait": self.mean_wait,
            "se_wait": self.se_wait,
            "sale_fraction": self.sale_fraction,
            "replications": self.replications,
            "seed": self.seed,
            "ties": self.ties,
        }


def play(s: PriceSchedule, w: ThresholdFunction, valuations, arrivals) -> tuple[float, float]:
    """Outcome ``(revenue, wait)`` of one realised buyer population.

    Each buyer targets ``max(w(v), alpha)``; the earliest target wins and pays
    the price at that time.  Ties go to the lower index and change nothing.
    """
    v = np.asarray(valuations, dtype=float)
    a = np.asarray(arrivals, dtype=float)
    if v.shape != a.shape:
        raise ParameterError("valuations and arrivals must have the same length")
    if v.size == 0:
        return 0.0, s.T
    tau = np.maximum(w(v), a)
    first = float(tau.min())
    if not math.isfinite(first):
        return 0.0, s.T
    return float(s.price(first)), first


def simulate_replication(
    s: PriceSchedule, w: ThresholdFunction, params: MarketParams, rng: np.random.Generator
) -> tuple[float, float]:
    """Draw one Poisson population from ``rng`` and play it out."""
    T = params.horizon
    n = rng.poisson(params.lam * T)
    arrivals = rng.uniform(0.0, T, n)
    valuations = rng.uniform(0.0, 1.0, n)
    return play(s, w, valuations, arrivals)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _block_sale_times(
    s: PriceSchedule, w: ThresholdFunction, params: MarketParams, cfg: SimConfig, block: int, n: int
) -> tuple[np.ndarray, int]:
    """Sale time of each replication in a block (``inf`` if unsold) and the tie count."""
    rng = _block_rng(cfg.seed, block)
    T = params.horizon
    draws = (n + 1) // 2 if cfg.antithetic else n
    counts = rng.poisson(params.lam * T, draws)
    total = int(counts.sum())
    arrivals = rng.uniform(0.0, T, total)
    values = rng.uniform(0.0, 1.0, total)
    if cfg.antithetic:
        counts = np.concatenate([counts, counts])[:n]
        extra = int(counts[draws:].sum())
        arrivals = np.concatenate([arrivals, T - arrivals[:extra]])
        values = np.concatenate([values, 1.0 - values[:extra]])
    tau = np.maximum(w(values), arrivals)
    first = np.full(n, np.inf)
    occupied = counts > 0
    if not np.any(occupied):
        return first, 0
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])[occupied]
    first[occupied] = np.minimum.reduceat(tau, starts)
    winners = tau == np.repeat(first, counts)
    winners &= np.isfinite(tau)
    per_rep = np.add.reduceat(winners.astype(np.int64), starts)
    return first, int(np.count_nonzero(per_rep > 1))


def _blocks(replications: int) -> list[tuple[int, int]]:
    full, rest = divmod(replications, BLOCK_SIZE)
    out = [(k, BLOCK_SIZE) for k in range(full)]
    if rest:
        out.append((full, rest))
    return out


def _block_moments(args):
    s, w, params, cfg, block, n, times = args
    first, ties = _block_sale_times(s, w, params, cfg, block, n)
    sold = np.isfinite(first)
    revenue = np.zeros(n)
    if np.any(sold):
        revenue[sold] = s.price(first[sold])
    wait = np.minimum(first, params.horizon)
    stats = []
    for x in (revenue, wait):
        mean = float(np.mean(x))
        stats.append((mean, float(np.sum((x - mean) ** 2))))
    surv = [int(np.count_nonzero(first > t)) for t in times]
    return n, stats, int(np.count_nonzero(sold)), ties, surv


def _run_blocks(s, w, params, cfg, times, jobs):
    tasks = [(s, w, params, cfg, k, n, tuple(times)) for k, n in _blocks(cfg.replications)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            return list(pool.map(_block_moments, tasks))
    return [_block_moments(t) for t in tasks]


def _combine(parts):
    """Chan's pairwise update of (count, mean, M2), folded in block order."""
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        total = n + nb
        delta = mb - mean
        mean += delta * nb / total
        m2 += m2b + delta * delta * n * nb / total
        n = total
    return mean, m2


def _check(s: PriceSchedule, params: MarketParams):
    if abs(s.T - params.horizon) > 1e-12 * params.horizon:
        raise ParameterError(f"schedule horizon {s.T} differs from market horizon {params.horizon}")


def estimate(
    s: PriceSchedule, w: ThresholdFunction, params: MarketParams, cfg: SimConfig, jobs: int = 1
) -> SimEstimate:
    """Mean revenue and wait with standard errors over ``cfg.replications`` plays."""
    _check(s, params)
    results = _run_blocks(s, w, params, cfg, (), jobs)
    n = cfg.replications
    out = []
    for i in range(2):
        mean, m2 = _combine((r[0], *r[1][i]) for r in results)
        se = math.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0
        out.append((mean, se))
    sold = sum(r[2] for r in results)
    ties = sum(r[3] for r in results)
    (mr, sr), (mw, sw) = out
    return SimEstimate(mr, sr, mw, sw, sold / n, n, cfg.seed, ties)


def empirical_survival(
    s: PriceSchedule,
    w: ThresholdFunction,
    params: MarketParams,
    cfg: SimConfig,
    times,
    jobs: int = 1,
) -> list[tuple[float, float, float]]:
    """``(t, fraction unsold at t, binomial standard error)`` for each time."""
    _check(s, params)
    times = [float(t) for t in times]
    results = _run_blocks(s, w, params, cfg, times, jobs)
    n = cfg.replications
    out = []
    for i, t in enumerate(times):
        frac = sum(r[4][i] for r in results) / n
        out.append((t, frac, math.sqrt(frac * (1.0 - frac) / n)))
    return out
