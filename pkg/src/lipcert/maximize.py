"""Validated branch-and-bound enclosure of the maximum value and maximum set.

Given a sound, inclusion-monotone interval objective ``f`` and a finite
union of boxes ``X``, :func:`maximize` returns an interval containing

    [sup_x lo f(x), sup_x hi f(x)]      (x ranging over the points of X)

together with a list of boxes covering every point whose value interval
reaches the lower end of that maximum.  Each round evaluates ``f`` on every
live box, keeps the boxes whose upper bound reaches the best lower bound,
and bisects the survivors along all dimensions.
"""

from __future__ import annotations

import enum
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from lipcert import rounding as rd
from lipcert.interval import HyperBox, Interval, ShapeError, bisect_arrays


class StopReason(enum.Enum):
    ITER_BUDGET = "IterBudget"
    BOX_BUDGET = "BoxBudget"
    WIDTH_REACHED = "WidthReached"


@dataclass(frozen=True)
class MaxParams:
    """Budgets: bisection rounds, live boxes, and target enclosure width.

    ``target_width=None`` never stops on width, so refinement continues
    until a budget runs out even after the value interval has collapsed.
    """

    max_iterations: int = 100
    max_boxes: int = 10 ** 6
    target_width: float | None = 0.0

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 0:
            raise ValueError("max_iterations must be a nonnegative integer")
        if int(self.max_boxes) != self.max_boxes or self.max_boxes < 1:
            raise ValueError("max_boxes must be a positive integer")
        object.__setattr__(self, "max_iterations", int(self.max_iterations))
        object.__setattr__(self, "max_boxes", int(self.max_boxes))
        if self.target_width is not None:
            if not (np.isfinite(self.target_width) and self.target_width >= 0):
                raise ValueError("target_width must be a finite number >= 0 or None")
            object.__setattr__(self, "target_width", float(self.target_width))

    def to_json(self) -> dict:
        width = None if self.target_width is None else repr(self.target_width)
        return {
            "max_iterations": self.max_iterations,
            "max_boxes": self.max_boxes,
            "target_width": width,
        }

    @classmethod
    def from_json(cls, obj: dict) -> MaxParams:
        width = obj["target_width"]
        return cls(int(obj["max_iterations"]), int(obj["max_boxes"]),
                   None if width is None else float(width))


@dataclass(frozen=True)
class TraceRow:
    iter: int
    value: Interval
    boxes_retained: int

    def to_json(self) -> dict:
        return {"iter": self.iter, "value": self.value.to_json(), "boxes_retained": self.boxes_retained}

    @classmethod
    def from_json(cls, obj: dict) -> TraceRow:
        return cls(int(obj["iter"]), Interval.from_json(obj["value"]), int(obj["boxes_retained"]))


@dataclass(frozen=True, eq=False)
class MaxResult:
    value: Interval
    box_lo: np.ndarray
    box_hi: np.ndarray
    iterations: int
    stop_reason: StopReason
    trace: tuple[TraceRow, ...] = field(default=())

    @property
    def boxes(self) -> list[HyperBox]:
        return [HyperBox.from_bounds(l, h) for l, h in zip(self.box_lo, self.box_hi)]

    @property
    def box_count(self) -> int:
        return self.box_lo.shape[0]

    def hull(self) -> HyperBox:
        return HyperBox.from_bounds(self.box_lo.min(axis=0), self.box_hi.max(axis=0))


def _stack(X) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(X, HyperBox):
        X = [X]
    X = list(X)
    if not X:
        raise ValueError("maximize needs at least one box")
    n = X[0].dims
    if any(b.dims != n for b in X):
        raise ShapeError("all boxes must have the same dimension")
    lo = np.array([b.lo for b in X], dtype=np.float64)
    hi = np.array([b.hi for b in X], dtype=np.float64)
    return lo, hi


def _scalar_batch(f):
    def evaluate(lo, hi):
        vals = [f(HyperBox.from_bounds(l, h)) for l, h in zip(lo, hi)]
        return np.array([v.lo for v in vals]), np.array([v.hi for v in vals])
    return evaluate


def _batch_evaluator(f, threads: int, chunk: int):
    batch = getattr(f, "evaluate_batch", None) or _scalar_batch(f)
    if threads <= 1:
        return batch, None
    pool = ThreadPoolExecutor(max_workers=threads)

    def evaluate(lo, hi):
        k = lo.shape[0]
        if k <= chunk:
            return batch(lo, hi)
        starts = range(0, k, chunk)
        # results are merged in box order, so they do not depend on scheduling
        parts = list(pool.map(lambda s: batch(lo[s:s + chunk], hi[s:s + chunk]), starts))
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    return evaluate, pool


def maximize(f, X, params: MaxParams = MaxParams(), threads: int = 1,
             chunk: int = 65536) -> MaxResult:
    """Enclose the maximum value and maximum set of ``f`` over ``X``.

    ``f`` maps a :class:`HyperBox` to an :class:`Interval`; objects that also
    provide ``evaluate_batch(lo, hi) -> (lo, hi)`` over ``(k, n)`` arrays are
    evaluated batch-wise.  ``X`` is a box or a list of boxes (overlaps are
    fine).  Row ``i`` of the trace is the enclosure after ``i`` bisection
    rounds; the run stops after ``params.max_iterations`` rounds, when
    bisecting the survivors would reach ``params.max_boxes`` boxes, or when
    the enclosure width is at most ``params.target_width``.  The checks run in
    that order and the first one that holds is the reported stop reason.
    """
    lo, hi = _stack(X)
    n = lo.shape[1]
    evaluate, pool = _batch_evaluator(f, threads, chunk)
    trace = []
    try:
        for i in itertools.count():
            flo, fhi = evaluate(lo, hi)
            flo = np.asarray(flo, dtype=np.float64)
            fhi = np.asarray(fhi, dtype=np.float64)
            if np.isnan(flo).any() or np.isnan(fhi).any():
                raise ValueError("objective returned NaN")
            upper = float(fhi.max())
            lower = float(flo.max())
            value = Interval(lower, upper)
            keep = fhi >= lower
            lo, hi = lo[keep], hi[keep]
            trace.append(TraceRow(i, value, int(lo.shape[0])))

            if i >= params.max_iterations:
                reason = StopReason.ITER_BUDGET
            elif (2 ** n) * lo.shape[0] >= params.max_boxes:
                reason = StopReason.BOX_BUDGET
            elif params.target_width is not None and rd.sub_up(upper, lower) <= params.target_width:
                reason = StopReason.WIDTH_REACHED
            else:
                lo, hi = bisect_arrays(lo, hi)
                continue
            return MaxResult(value, lo, hi, i, reason, tuple(trace))
    finally:
        if pool is not None:
            pool.shutdown()


def maxv_maxs_reference(f: Callable, X: HyperBox, grid: int, *, vectorized: bool = False,
                        tol: float = 0.0, max_points: int = 10 ** 6):
    """Grid approximation of the maximum value and maximum set of a point map.

    ``f`` maps a point to a real or an :class:`Interval` (or, with
    ``vectorized=True``, a ``(k, n)`` array of points to an array of reals or
    a ``(lo, hi)`` pair).  Returns ``(Interval, points)`` where the interval
    pairs the largest sampled lower and upper values and ``points`` holds the
    grid points whose upper value is within ``tol`` of the largest lower one.
    This is a test oracle, not a validated method.
    """
    n = X.dims
    total = grid ** n
    if grid < 1 or total > max_points:
        raise ValueError(f"grid of {grid}**{n} points exceeds the budget of {max_points}")
    axes = [np.linspace(c.lo, c.hi, grid) for c in X.coords]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    if vectorized:
        out = f(pts)
        if isinstance(out, tuple):
            vlo, vhi = (np.asarray(o, dtype=float) for o in out)
        else:
            vlo = vhi = np.asarray(out, dtype=float)
    else:
        vals = [f(p) for p in pts]
        vlo = np.array([v.lo if isinstance(v, Interval) else float(v) for v in vals])
        vhi = np.array([v.hi if isinstance(v, Interval) else float(v) for v in vals])
    best_lo = float(vlo.max())
    value = Interval(best_lo, float(vhi.max()))
    return value, pts[vhi >= best_lo - tol]
