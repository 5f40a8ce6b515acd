"""Period-3 detection for maps of the unit interval.

A continuous interval map with a point of period 3 is chaotic in the sense
of Li and Yorke.  Since the only periods dividing 3 are 1 and 3, f has a
3-cycle exactly when f^3 has fixed points that f does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from . import pwl
from .errors import ContractError
from .netgen import YSequence
from .pwl import FixedPointSet, PwlMap

MATCH_TOL = 1e-8
CYCLE_CLOSURE_TOL = 1e-8
CYCLE_DISTINCT_TOL = 1e-6
NONZERO_FIXED_EPS = 1e-9
BISECTION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ChaosVerdict:
    is_period3: bool
    fixed_points_f: FixedPointSet
    fixed_points_f3: FixedPointSet
    cycle: Optional[Tuple[float, float, float]]
    screen_fired: bool
    method: str
    reliable: bool = True
    grid_size: Optional[int] = None
    note: str = ""

    @property
    def n_fp_f(self) -> int:
        return len(self.fixed_points_f)

    @property
    def n_fp_f3(self) -> int:
        return len(self.fixed_points_f3)

    def to_json(self, **context) -> dict:
        """JSON-lines record; ``context`` supplies seed, k and scheme."""
        rec = {
            "seed": context.get("seed"),
            "k": context.get("k"),
            "scheme": context.get("scheme"),
            "method": self.method,
            "is_period3": self.is_period3,
            "n_fp_f": self.n_fp_f,
            "n_fp_f3": self.n_fp_f3,
            "cycle": list(self.cycle) if self.cycle is not None else None,
            "screen_fired": self.screen_fired,
            "reliable": self.reliable,
        }
        if self.grid_size is not None:
            rec["grid_size"] = self.grid_size
        if self.note:
            rec["note"] = self.note
        return rec


def screen_period3(y) -> bool:
    """Sufficient condition: some y_i > 1 occurs before some y_l < 0."""
    values = y.values if isinstance(y, YSequence) else y
    seen_high = False
    for v in values:
        if v > 1.0:
            seen_high = True
        elif seen_high and v < 0.0:
            return True
    return False


def _match(fp1: np.ndarray, fp3: np.ndarray):
    """Match each fixed point of f to exactly one fixed point of f^3.

    Returns (mask of matched f^3 points, ok) where ok is False when some
    fixed point of f has zero or several candidates within MATCH_TOL.
    """
    matched = np.zeros(fp3.size, dtype=bool)
    ok = True
    for p in fp1:
        lo = np.searchsorted(fp3, p - MATCH_TOL, side="left")
        hi = np.searchsorted(fp3, p + MATCH_TOL, side="right")
        if hi - lo != 1:
            ok = False
            matched[lo:hi] = True
        else:
            matched[lo] = True
    return matched, ok


def _verdict(f: Callable, fp1: FixedPointSet, fp3: FixedPointSet, method: str, grid_size=None, screen_fired=False):
    matched, ok = _match(fp1.points, fp3.points)
    notes = []
    if not ok:
        notes.append("ambiguous fixed-point match")
    if fp1.has_tangency or fp3.has_tangency:
        ok = False
        notes.append("tangent crossing")
    candidates = fp3.points[~matched]
    cycle = None
    for p in candidates:
        c1 = float(p)
        c2 = float(f(c1))
        c3 = float(f(c2))
        back = float(f(c3))
        if abs(back - c1) > CYCLE_CLOSURE_TOL:
            continue
        if min(abs(c1 - c2), abs(c2 - c3), abs(c1 - c3)) <= CYCLE_DISTINCT_TOL:
            continue
        cycle = (c1, c2, c3)
        break
    is_p3 = candidates.size > 0
    if is_p3 and cycle is None:
        ok = False
        notes.append("no valid 3-cycle among unmatched points")
    return ChaosVerdict(
        is_period3=bool(is_p3),
        fixed_points_f=fp1,
        fixed_points_f3=fp3,
        cycle=cycle,
        screen_fired=bool(screen_fired),
        method=method,
        reliable=ok,
        grid_size=grid_size,
        note="; ".join(notes),
    )


def detect_period3_exact(m: PwlMap, budget: int = pwl.DEFAULT_BUDGET, screen_fired: bool = False) -> ChaosVerdict:
    """Compare fixed points of f and f^3 computed exactly on the PWL form.

    Raises BudgetExceeded when f^3 has more than ``budget`` pieces.
    """
    if not m.in_unit_range():
        raise ContractError("map must take values in [0, 1]")
    f3 = pwl.iterate_t(m, 3, budget)
    fp1 = pwl.fixed_points(m)
    fp3 = pwl.fixed_points(f3)
    return _verdict(lambda x: pwl.evaluate(m, x), fp1, fp3, "exact-pwl", screen_fired=screen_fired)


def _grid_roots(g: Callable[[np.ndarray], np.ndarray], grid: np.ndarray) -> np.ndarray:
    vals = g(grid)
    exact = grid[vals == 0.0]
    idx = np.flatnonzero(vals[:-1] * vals[1:] < 0)
    lo, hi = grid[idx], grid[idx + 1]
    glo = vals[idx]
    while lo.size and np.max(hi - lo) > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        left = np.sign(gm) == np.sign(glo)
        lo = np.where(left, mid, lo)
        glo = np.where(left, gm, glo)
        hi = np.where(left, hi, mid)
        hit = gm == 0.0
        if hit.any():
            lo = np.where(hit, mid, lo)
            hi = np.where(hit, mid, hi)
    roots = np.sort(np.concatenate((exact, 0.5 * (lo + hi))))
    if roots.size:
        keep = np.ones(roots.size, dtype=bool)
        keep[1:] = np.diff(roots) > pwl.FIXED_POINT_DEDUP_TOL
        roots = roots[keep]
    return roots


def _as_fixed_set(points: np.ndarray) -> FixedPointSet:
    return FixedPointSet(points, np.full(points.size, -1, dtype=np.int64), np.zeros(points.size, dtype=bool))


def detect_period3_numeric(f: Callable, grid_size: int = 100_000, domain=(0.0, 1.0), screen_fired: bool = False) -> ChaosVerdict:
    """Grid sign-change scan of f^3(x) - x and f(x) - x with bisection.

    ``f`` must be vectorized.  Roots missed by the grid go undetected; the
    verdict records ``grid_size`` for that reason.
    """
    if grid_size < 2:
        raise ContractError("grid_size must be >= 2")
    if isinstance(f, PwlMap):
        m = f
        f = lambda x: pwl._interp(m.breakpoints, m.values, np.clip(x, 0.0, 1.0))
    grid = np.linspace(domain[0], domain[1], grid_size)
    fp1 = _grid_roots(lambda x: f(x) - x, grid)
    fp3 = _grid_roots(lambda x: f(f(f(x))) - x, grid)
    scalar = lambda x: float(np.asarray(f(np.array([x])))[0])
    return _verdict(scalar, _as_fixed_set(fp1), _as_fixed_set(fp3), "numeric", grid_size=grid_size, screen_fired=screen_fired)


def has_nonzero_fixed_point(m: PwlMap) -> bool:
    """True when m(x) = x somewhere in (1e-9, 1]; x = 0 is always fixed for the family."""
    fp = pwl.fixed_points(m)
    return bool(np.any(fp.points > NONZERO_FIXED_EPS))
