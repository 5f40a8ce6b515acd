"""Exact algebra of continuous piecewise-linear maps on [0, 1].

A map is stored as its breakpoints and the values there; between two
consecutive breakpoints it is the linear interpolant.  Continuity is
therefore structural and repeated composition cannot tear the graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import BudgetExceeded, ContractError, DomainError

BREAKPOINT_TOL = 1e-12
SLOPE_RTOL = 1e-9
FIXED_POINT_ZERO_TOL = 1e-12
FIXED_POINT_DEDUP_TOL = 1e-10
DEFAULT_BUDGET = 1_000_000


@dataclass(frozen=True, eq=False)
class PwlMap:
    """Continuous piecewise-linear function on [0, 1]."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        xs = np.array(self.breakpoints, dtype=np.float64)
        ys = np.array(self.values, dtype=np.float64)
        if xs.ndim != 1 or xs.shape != ys.shape:
            raise ContractError("breakpoints and values must be 1-d and equally long")
        if xs.size < 2 or xs[0] != 0.0 or xs[-1] != 1.0:
            raise ContractError("breakpoints must start at 0 and end at 1")
        if np.any(np.diff(xs) <= 0):
            raise ContractError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(ys)):
            raise ContractError("values must be finite")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "breakpoints", xs)
        object.__setattr__(self, "values", ys)

    @property
    def n_pieces(self) -> int:
        return self.breakpoints.size - 1

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    def in_unit_range(self) -> bool:
        return bool(self.values.min() >= 0.0 and self.values.max() <= 1.0)

    def __call__(self, x):
        return evaluate(self, x)

    def __eq__(self, other):
        if not isinstance(other, PwlMap):
            return NotImplemented
        return np.array_equal(self.breakpoints, other.breakpoints) and np.array_equal(
            self.values, other.values
        )

    __hash__ = None

    def to_json(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "PwlMap":
        return cls(obj["breakpoints"], obj["values"])

    def __repr__(self):
        return f"PwlMap(n_pieces={self.n_pieces})"


def identity() -> PwlMap:
    return PwlMap([0.0, 1.0], [0.0, 1.0])


def constant(c: float) -> PwlMap:
    return PwlMap([0.0, 1.0], [c, c])


def triangle() -> PwlMap:
    """Tent map 2x on [0, 1/2], 2(1 - x) on [1/2, 1]."""
    return PwlMap([0.0, 0.5, 1.0], [0.0, 1.0, 0.0])


def from_relu_sum(weights: Iterable[float], biases: Iterable[float]) -> PwlMap:
    """Unclipped map x -> sum_i w_i * relu(x - b_i) on [0, 1].

    Biases must be strictly increasing in [0, 1); a bias of exactly 0 adds
    no breakpoint (the unit is simply active on the whole domain).
    """
    a = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights, dtype=np.float64)
    b = np.asarray(list(biases) if not isinstance(biases, np.ndarray) else biases, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError("weights and biases must be 1-d sequences of equal length")
    if b.size and (b[0] < 0.0 or b[-1] >= 1.0):
        raise ContractError("biases must lie in [0, 1)")
    if np.any(np.diff(b) <= 0):
        raise ContractError("biases must be strictly increasing")
    cum_a = np.cumsum(a)
    cum_ab = np.cumsum(a * b)
    # value at b_i uses units strictly left of i
    prev_a = np.concatenate(([0.0], cum_a[:-1]))
    prev_ab = np.concatenate(([0.0], cum_ab[:-1]))
    at_bias = b * prev_a - prev_ab
    at_one = (cum_a[-1] - cum_ab[-1]) if b.size else 0.0
    if b.size and b[0] == 0.0:
        xs = np.concatenate((b, [1.0]))
        ys = np.concatenate((at_bias, [at_one]))
    else:
        xs = np.concatenate(([0.0], b, [1.0]))
        ys = np.concatenate(([0.0], at_bias, [at_one]))
    return PwlMap(xs, ys)


def evaluate(m: PwlMap, x):
    """Evaluate ``m`` at scalar or array ``x``; exact at stored breakpoints."""
    xs, ys = m.breakpoints, m.values
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise DomainError(f"evaluation point outside [0, 1]: {x!r}")
    return _interp(xs, ys, arr) if arr.ndim else float(_interp(xs, ys, arr[None])[0])


def _interp(xs: np.ndarray, ys: np.ndarray, x: np.ndarray) -> np.ndarray:
    i = np.searchsorted(xs, x, side="right") - 1
    np.clip(i, 0, xs.size - 2, out=i)
    x0, x1 = xs[i], xs[i + 1]
    y0, y1 = ys[i], ys[i + 1]
    out = y0 + (x - x0) / (x1 - x0) * (y1 - y0)
    return np.where(x == x1, y1, out)


def _dedup(xs: np.ndarray, ys: np.ndarray, tol: float = BREAKPOINT_TOL):
    keep = np.empty(xs.size, dtype=bool)
    keep[0] = True
    keep[1:] = np.diff(xs) > tol
    if keep.all():
        return xs, ys
    last_dropped = not keep[-1]
    xs, ys = xs[keep], ys[keep]
    if last_dropped:
        if xs.size == 1:
            xs = np.array([0.0, 1.0])
            ys = np.array([ys[0], ys[0]])
        else:
            xs = xs.copy()
            xs[-1] = 1.0
    return xs, ys


def _refine(
    xs: np.ndarray,
    ys: np.ndarray,
    kinks: np.ndarray,
    outer: Callable[[np.ndarray], np.ndarray],
    kink_values: np.ndarray,
):
    """Breakpoints/values of ``outer(inner)`` where inner is (xs, ys).

    ``kinks`` are the sorted breakpoints of ``outer`` (which may be defined
    on the whole real line); ``kink_values`` is ``outer`` evaluated there.
    """
    y0, y1 = ys[:-1], ys[1:]
    lo = np.minimum(y0, y1)
    hi = np.maximum(y0, y1)
    left = np.searchsorted(kinks, lo, side="right")
    right = np.searchsorted(kinks, hi, side="left")
    cnt = np.maximum(right - left, 0)
    total = int(cnt.sum())
    out_inner = outer(ys)
    if total == 0:
        return xs.copy(), out_inner
    n = xs.size
    piece = np.repeat(np.arange(n - 1), cnt)
    starts = np.cumsum(cnt) - cnt
    offs = np.arange(total) - starts[piece]
    ascending = (y1 >= y0)[piece]
    kidx = np.where(ascending, left[piece] + offs, right[piece] - 1 - offs)
    p = kinks[kidx]
    px0, px1 = xs[piece], xs[piece + 1]
    py0, py1 = y0[piece], y1[piece]
    px = px0 + (p - py0) / (py1 - py0) * (px1 - px0)
    px = np.minimum(np.maximum(px, px0), px1)
    before = np.concatenate(([0], np.cumsum(cnt)))
    pos_inner = np.arange(n) + before
    pos_pre = piece + 1 + before[piece] + offs
    new_x = np.empty(n + total)
    new_y = np.empty(n + total)
    new_x[pos_inner] = xs
    new_y[pos_inner] = out_inner
    new_x[pos_pre] = px
    new_y[pos_pre] = kink_values[kidx]
    return new_x, new_y


def _clip01(y: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(y, 0.0), 1.0)


_CLIP_KINKS = np.array([0.0, 1.0])


def clip_apply(m: PwlMap) -> PwlMap:
    """Pointwise min(max(m, 0), 1), inserting breakpoints at the crossings."""
    xs, ys = _refine(m.breakpoints, m.values, _CLIP_KINKS, _clip01, _CLIP_KINKS)
    return PwlMap(*_dedup(xs, ys))


def compose(outer: PwlMap, inner: PwlMap) -> PwlMap:
    """Exact representation of ``outer(inner(x))``.

    ``inner`` must map into [0, 1]; clip it first otherwise.
    """
    if not inner.in_unit_range():
        raise ContractError("inner map leaves [0, 1]; apply clip_apply first")
    kinks = outer.breakpoints[1:-1]
    xs, ys = _refine(
        inner.breakpoints,
        inner.values,
        kinks,
        lambda y: _interp(outer.breakpoints, outer.values, y),
        outer.values[1:-1],
    )
    return PwlMap(*_dedup(xs, ys))


def compose_with(inner: PwlMap, kinks, fn: Callable[[np.ndarray], np.ndarray]) -> PwlMap:
    """Compose a real-line piecewise-linear function ``fn`` after ``inner``.

    ``fn`` must be affine between consecutive ``kinks``; ``inner`` may take
    any real values.  Used to unroll networks that are not clipped.
    """
    k = np.unique(np.asarray(kinks, dtype=np.float64))
    xs, ys = _refine(inner.breakpoints, inner.values, k, fn, np.asarray(fn(k), dtype=np.float64))
    return PwlMap(*_dedup(xs, ys))


def _same_slope(s0: np.ndarray, s1: np.ndarray, rtol: float = SLOPE_RTOL) -> np.ndarray:
    return np.abs(s0 - s1) <= rtol * np.maximum(np.abs(s0), np.abs(s1))


def simplify(m: PwlMap) -> PwlMap:
    """Drop interior breakpoints where both adjacent pieces share a slope."""
    if m.n_pieces < 2:
        return m
    s = m.slopes
    keep = np.ones(m.breakpoints.size, dtype=bool)
    keep[1:-1] = ~_same_slope(s[:-1], s[1:])
    if keep.all():
        return m
    return PwlMap(m.breakpoints[keep], m.values[keep])


def count_regions(m: PwlMap) -> int:
    """Number of maximal intervals on which ``m`` is affine."""
    if m.n_pieces < 2:
        return 1
    s = m.slopes
    return 1 + int(np.count_nonzero(~_same_slope(s[:-1], s[1:])))


def iterate_t(m: PwlMap, t: int, budget: int = DEFAULT_BUDGET) -> PwlMap:
    """Exact t-fold self-composition of ``m`` (simplified after each step).

    Raises BudgetExceeded as soon as the piece count passes ``budget``.
    """
    if t < 1:
        raise ContractError("t must be >= 1")
    if not m.in_unit_range():
        raise ContractError("map must take values in [0, 1] to be iterated")
    base = simplify(m)
    if base.n_pieces > budget:
        raise BudgetExceeded(1, base.n_pieces, budget)
    out = base
    for step in range(2, t + 1):
        out = simplify(compose(base, out))
        if out.n_pieces > budget:
            raise BudgetExceeded(step, out.n_pieces, budget)
    return out


def iterates(m: PwlMap, t: int, budget: int = DEFAULT_BUDGET):
    """Yield f, f^2, ..., f^t, stopping with BudgetExceeded like iterate_t."""
    if not m.in_unit_range():
        raise ContractError("map must take values in [0, 1] to be iterated")
    base = simplify(m)
    out = base
    for step in range(1, t + 1):
        if step > 1:
            out = simplify(compose(base, out))
        if out.n_pieces > budget:
            raise BudgetExceeded(step, out.n_pieces, budget)
        yield out


@dataclass(frozen=True, eq=False)
class FixedPointSet:
    points: np.ndarray
    segment_indices: np.ndarray
    tangency_flags: np.ndarray

    def __len__(self):
        return int(self.points.size)

    @property
    def has_tangency(self) -> bool:
        return bool(self.tangency_flags.any())

    def __repr__(self):
        return f"FixedPointSet({self.points.tolist()})"


def fixed_points(m: PwlMap) -> FixedPointSet:
    """All solutions of m(x) = x, one per crossing of the diagonal."""
    xs, ys = m.breakpoints, m.values
    g = ys - xs
    g0, g1 = g[:-1], g[1:]
    pts, segs, flags = [], [], []

    cross = np.flatnonzero((g0 * g1 < 0))
    if cross.size:
        x0, x1 = xs[cross], xs[cross + 1]
        r = x0 + g0[cross] / (g0[cross] - g1[cross]) * (x1 - x0)
        pts.append(np.minimum(np.maximum(r, x0), x1))
        segs.append(cross)
        flags.append(np.zeros(cross.size, dtype=bool))

    zero = np.abs(g) <= FIXED_POINT_ZERO_TOL
    if zero.any():
        slope_one = np.abs(m.slopes - 1.0) <= SLOPE_RTOL
        tangent_piece = slope_one & zero[:-1] & zero[1:]
        idx = np.flatnonzero(zero)
        seg = np.minimum(idx, m.n_pieces - 1)
        on_tangent = np.zeros(xs.size, dtype=bool)
        on_tangent[:-1] |= tangent_piece
        on_tangent[1:] |= tangent_piece
        pts.append(xs[idx])
        segs.append(seg)
        flags.append(on_tangent[idx])

    if not pts:
        empty = np.empty(0)
        return FixedPointSet(empty, np.empty(0, dtype=np.int64), np.empty(0, dtype=bool))
    p = np.concatenate(pts)
    s = np.concatenate(segs).astype(np.int64)
    f = np.concatenate(flags)
    order = np.argsort(p, kind="stable")
    p, s, f = p[order], s[order], f[order]
    keep = np.ones(p.size, dtype=bool)
    keep[1:] = np.diff(p) > FIXED_POINT_DEDUP_TOL
    # a dropped duplicate passes its tangency flag to the kept point
    group = np.cumsum(keep) - 1
    merged = np.zeros(int(keep.sum()), dtype=bool)
    np.logical_or.at(merged, group, f)
    return FixedPointSet(p[keep], s[keep], merged)
