"""Static figures: frontier scatters and threshold curves.

Figures are written with a fixed SVG hash salt and no date metadata so the
same data always produce the same bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .equilibrium import ThresholdFunction  # noqa: E402
from .frontier import BetaSummary  # noqa: E402
from .schedules import Family  # noqa: E402

_COLORS = {
    Family.CONSTANT: "tab:orange",
    Family.LINEAR: "tab:green",
    Family.POLYNOMIAL: "tab:blue",
    Family.QUASI_AUCTION: "tab:purple",
}

_STYLE = {
    "svg.hashsalt": "expiry-pricer",
    "svg.fonttype": "path",
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path: Path):
    path = Path(path)
    fmt = path.suffix.lstrip(".") or "svg"
    metadata = {"Date": None} if fmt == "svg" else {}
    fig.savefig(path, format=fmt, metadata=metadata, bbox_inches="tight")
    plt.close(fig)


def frontier_figure(summary: BetaSummary, path, title: str | None = None):
    """Revenue against wait per family, with the slope-``beta`` line through the best point."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        for family in Family:
            pts = [p for p in summary.points if p.family is family and p.usable]
            if not pts:
                continue
            wait = np.array([p.wait for p in pts])
            rev = np.array([p.revenue for p in pts])
            order = np.argsort(wait, kind="stable")
            ax.scatter(wait[order], rev[order], s=9, color=_COLORS[family], label=family.value)
        rejected = [p for p in summary.points if not p.construction_failed and not p.verification_passed]
        if rejected:
            ax.scatter(
                [p.wait for p in rejected],
                [p.revenue for p in rejected],
                s=14,
                marker="x",
                color="0.5",
                label="not verified",
            )
        best = summary.best
        x = np.array(ax.get_xlim())
        ax.plot(x, tangent_line(summary, x), "k--", lw=0.8, label=f"slope {summary.beta:g}")
        ax.scatter([best.wait], [best.revenue], s=60, facecolors="none", edgecolors="k", zorder=3)
        ax.set_xlim(*x)
        ax.set_xlabel("expected waiting time")
        ax.set_ylabel("expected revenue")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, fontsize=8)
        _save(fig, path)


def threshold_figure(w: ThresholdFunction, path, title: str | None = None):
    """Threshold time against valuation, including the no-purchase and buy-now regions."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.8))
        v = list(w.v)
        t = list(w.w)
        if v[-1] < 1.0:
            v += [v[-1], 1.0]
            t += [0.0, 0.0]
        ax.plot(v, t, color="tab:blue")
        if w.lower_cutoff > 0:
            ax.axvspan(0.0, w.lower_cutoff, color="0.9", label="never buys")
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, w.horizon * 1.02)
        ax.set_xlabel("valuation v")
        ax.set_ylabel("target time w(v)")
        if title:
            ax.set_title(title)
        if w.lower_cutoff > 0:
            ax.legend(frameon=False, fontsize=8)
        _save(fig, path)


def tangent_line(summary: BetaSummary, waits) -> np.ndarray:
    """Revenue on the slope-``beta`` line through the best point."""
    best = summary.best
    return best.revenue + summary.beta * (np.asarray(waits, dtype=float) - best.wait)
