"""Orbits, finite-horizon scrambling statistics and linear-region growth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import pwl
from .errors import BudgetExceeded, ContractError
from .pwl import PwlMap

MapLike = Union[PwlMap, Callable[[float], float]]


def _stepper(f: MapLike) -> Callable[[float], float]:
    if isinstance(f, PwlMap):
        return lambda x: pwl.evaluate(f, x)
    return lambda x: float(np.asarray(f(x)))


def trajectory(f: MapLike, x0: float, T: int) -> np.ndarray:
    """(x0, f(x0), ..., f^T(x0)), iterating the base map directly."""
    if T < 1:
        raise ContractError("T must be >= 1")
    if isinstance(f, PwlMap) and not 0.0 <= x0 <= 1.0:
        raise ContractError("x0 must lie in [0, 1]")
    step = _stepper(f)
    out = np.empty(T + 1)
    out[0] = x = float(x0)
    for t in range(1, T + 1):
        x = step(x)
        out[t] = x
    return out


@dataclass(frozen=True, eq=False)
class ScramblingReport:
    """Distances d_t = |f^t(x) - f^t(y)| for t = 0..T.

    ``min_tail``/``max_tail`` summarize the window t in [T/2, T]; they are
    finite-horizon stand-ins for the liminf and limsup, not a verdict.
    """

    horizon: int
    pair_distances: np.ndarray
    min_tail: float
    max_tail: float
    initial_distance: float

    def rows(self):
        return [(t, float(d)) for t, d in enumerate(self.pair_distances)]


def scrambling_report(f: MapLike, x: float, gap: float, T: int) -> ScramblingReport:
    if gap < 0:
        raise ContractError("gap must be >= 0")
    y = x + gap
    if isinstance(f, PwlMap) and not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ContractError("x and x + gap must lie in [0, 1]")
    d = np.abs(trajectory(f, x, T) - trajectory(f, y, T))
    tail = d[T // 2 :]
    return ScramblingReport(
        horizon=T,
        pair_distances=d,
        min_tail=float(tail.min()),
        max_tail=float(tail.max()),
        initial_distance=float(d[0]),
    )


@dataclass(frozen=True, eq=False)
class RegionGrowthSeries:
    counts: np.ndarray  # counts[i] is the region count of f^(i+1)
    fitted_rate: float
    truncated_at: Optional[int] = None
    fit_window: tuple = ()

    def rows(self):
        return [(t + 1, int(c)) for t, c in enumerate(self.counts)]


def fit_growth_rate(counts, fit_start: int = 3, min_points: int = 4) -> tuple:
    """Base of exponential growth from least squares on (t, log count).

    Uses t >= fit_start; if fewer than ``min_points`` remain, the last
    ``min_points`` available counts are used instead.  Returns (rate, window).
    """
    counts = np.asarray(counts, dtype=np.float64)
    t = np.arange(1, counts.size + 1)
    sel = t >= fit_start
    if sel.sum() < min_points:
        sel = t > counts.size - min_points
    tt, cc = t[sel], counts[sel]
    if tt.size < 2:
        return 1.0, tuple(int(v) for v in tt)
    slope = np.polyfit(tt, np.log(cc), 1)[0]
    return float(math.exp(slope)), (int(tt[0]), int(tt[-1]))


def region_growth(
    f: PwlMap, T: int, budget: int = pwl.DEFAULT_BUDGET, fit_start: int = 3
) -> RegionGrowthSeries:
    """Region counts of f, f^2, ..., f^T; stops early (not fails) on budget."""
    if T < 3:
        raise ContractError("T must be >= 3")
    counts = []
    truncated = None
    try:
        for m in pwl.iterates(f, T, budget):
            counts.append(pwl.count_regions(m))
    except BudgetExceeded as exc:
        truncated = exc.iteration
    if not counts:
        raise BudgetExceeded(1, f.n_pieces, budget)
    rate, window = fit_growth_rate(counts, fit_start)
    return RegionGrowthSeries(np.array(counts, dtype=np.int64), rate, truncated, window)
