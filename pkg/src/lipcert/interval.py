"""Outward-rounded interval arithmetic, hyperboxes and interval matrices.

Endpoints are binary64.  Every operation returns an interval that contains
the exact real image set; endpoints are the correctly rounded directed
results (see :mod:`lipcert.rounding`), so exact dyadic computations stay
exact and nothing is widened gratuitously.

The batch kernels at the bottom operate on ``(lo, hi)`` numpy arrays and are
what the gradient and maximisation code run on; they follow the same
rounding rules as the scalar operations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from lipcert import rounding as rd


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


@dataclass(frozen=True, slots=True)
class Interval:
    """Closed interval ``[lo, hi]`` with binary64 endpoints."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError(f"NaN endpoint in [{self.lo}, {self.hi}]")
        if lo > hi:
            raise ValueError(f"empty interval [{lo!r}, {hi!r}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> Interval:
        return cls(x, x)

    @classmethod
    def entire(cls) -> Interval:
        """The whole real line (the bottom element)."""
        return cls(-math.inf, math.inf)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    @property
    def width(self) -> float:
        return rd.sub_up(self.hi, self.lo)

    def __contains__(self, t) -> bool:
        if isinstance(t, Interval):
            return self.lo <= t.lo and t.hi <= self.hi
        return self.lo <= t <= self.hi

    def subset_of(self, other: Interval) -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def __add__(self, other):
        return iv_add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return iv_sub(self, _coerce(other))

    def __rsub__(self, other):
        return iv_sub(_coerce(other), self)

    def __mul__(self, other):
        return iv_mul(self, _coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return iv_neg(self)

    def __abs__(self):
        return iv_abs(self)

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"

    def __str__(self):
        return f"[{self.lo:.17g}, {self.hi:.17g}]"

    def to_json(self) -> dict:
        # repr() of a float is the shortest string that round-trips exactly
        return {"lo": repr(self.lo), "hi": repr(self.hi)}

    @classmethod
    def from_json(cls, obj: dict) -> Interval:
        return cls(float(obj["lo"]), float(obj["hi"]))


def _coerce(x) -> Interval:
    return x if isinstance(x, Interval) else Interval.point(float(x))


def _checked(lo: float, hi: float, *operands: Interval) -> Interval:
    out = Interval(lo, hi)
    if not out.bounded and all(op.bounded for op in operands):
        warnings.warn(f"interval overflow: {out}", RuntimeWarning, stacklevel=3)
    return out


def iv_add(a: Interval, b: Interval) -> Interval:
    return _checked(rd.add_down(a.lo, b.lo), rd.add_up(a.hi, b.hi), a, b)


def iv_sub(a: Interval, b: Interval) -> Interval:
    return _checked(rd.sub_down(a.lo, b.hi), rd.sub_up(a.hi, b.lo), a, b)


def iv_neg(a: Interval) -> Interval:
    return Interval(-a.hi, -a.lo)


def iv_mul(a: Interval, b: Interval) -> Interval:
    ends = list(product((a.lo, a.hi), (b.lo, b.hi)))
    lo = min(rd.mul_down(x, y) for x, y in ends)
    hi = max(rd.mul_up(x, y) for x, y in ends)
    return _checked(lo, hi, a, b)


def iv_scale(scalar: float, a: Interval) -> Interval:
    s = float(scalar)
    if s >= 0:
        return _checked(rd.mul_down(s, a.lo), rd.mul_up(s, a.hi), a)
    return _checked(rd.mul_down(s, a.hi), rd.mul_up(s, a.lo), a)


def iv_abs(a: Interval) -> Interval:
    if a.lo >= 0:
        return a
    if a.hi <= 0:
        return Interval(-a.hi, -a.lo)
    return Interval(0.0, max(-a.lo, a.hi))


def iv_contains(a: Interval, t: float) -> bool:
    return a.lo <= t <= a.hi


def iv_hull(a: Interval, b: Interval) -> Interval:
    return Interval(min(a.lo, b.lo), max(a.hi, b.hi))


def iv_sum(items: Iterable[Interval]) -> Interval:
    """Left-to-right outward-rounded sum; the empty sum is ``[0, 0]``."""
    lo = hi = 0.0
    for it in items:
        lo = rd.add_down(lo, it.lo)
        hi = rd.add_up(hi, it.hi)
    return Interval(lo, hi)


# -- hyperboxes -------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class HyperBox:
    """Product of closed intervals, one per coordinate."""

    coords: tuple[Interval, ...]

    def __post_init__(self):
        coords = tuple(self.coords)
        if not coords:
            raise ShapeError("a hyperbox needs at least one coordinate")
        if not all(isinstance(c, Interval) for c in coords):
            raise TypeError("hyperbox coordinates must be Interval instances")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float]) -> HyperBox:
        if len(lo) != len(hi):
            raise ShapeError(f"bounds of length {len(lo)} and {len(hi)}")
        return cls(tuple(Interval(l, h) for l, h in zip(lo, hi)))

    @classmethod
    def from_point(cls, x: Sequence[float]) -> HyperBox:
        return cls(tuple(Interval.point(v) for v in x))

    @classmethod
    def ball(cls, center: Sequence[float], radius: float) -> HyperBox:
        """Outward-rounded enclosure of the closed inf-norm ball."""
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        return cls(tuple(
            Interval(rd.sub_down(c, radius), rd.add_up(c, radius))
            for c in map(float, center)
        ))

    @property
    def dims(self) -> int:
        return len(self.coords)

    @property
    def lo(self) -> np.ndarray:
        return np.array([c.lo for c in self.coords])

    @property
    def hi(self) -> np.ndarray:
        return np.array([c.hi for c in self.coords])

    def __len__(self):
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def __getitem__(self, i):
        return self.coords[i]

    def contains_point(self, x: Sequence[float]) -> bool:
        return len(x) == self.dims and all(c.lo <= v <= c.hi for c, v in zip(self.coords, x))

    def subset_of(self, other: HyperBox) -> bool:
        return self.dims == other.dims and all(
            a.subset_of(b) for a, b in zip(self.coords, other.coords)
        )

    def __str__(self):
        return " x ".join(str(c) for c in self.coords)

    def to_json(self) -> list:
        return [c.to_json() for c in self.coords]

    @classmethod
    def from_json(cls, obj: list) -> HyperBox:
        return cls(tuple(Interval.from_json(c) for c in obj))


def box_width(b: HyperBox) -> float:
    return max(c.width for c in b.coords)


def box_norm1(b: HyperBox | Sequence[Interval]) -> Interval:
    """Interval 1-norm: the outward-rounded sum of coordinate magnitudes."""
    return iv_sum(iv_abs(c) for c in b)


def midpoint(lo: float, hi: float) -> float:
    m = (lo + hi) * 0.5
    if not math.isfinite(m):
        m = lo * 0.5 + hi * 0.5
    return min(max(m, lo), hi)


def box_bisect(b: HyperBox) -> list[HyperBox]:
    """Split every coordinate at its midpoint, giving ``2**n`` children.

    Children are ordered with coordinate 0 as the most significant bit
    (lower half first), the same order :func:`bisect_arrays` produces.
    """
    halves = []
    for c in b.coords:
        m = midpoint(c.lo, c.hi)
        halves.append((Interval(c.lo, m), Interval(m, c.hi)))
    return [HyperBox(coords) for coords in product(*halves)]


def box_hull(a: HyperBox, b: HyperBox) -> HyperBox:
    if a.dims != b.dims:
        raise ShapeError(f"hull of boxes with dims {a.dims} and {b.dims}")
    return HyperBox(tuple(iv_hull(x, y) for x, y in zip(a.coords, b.coords)))


# -- interval matrices ------------------------------------------------------

@dataclass(frozen=True, slots=True)
class IntervalMatrix:
    entries: tuple[tuple[Interval, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.entries)
        if not rows or not rows[0]:
            raise ShapeError("interval matrix must be nonempty")
        if any(len(r) != len(rows[0]) for r in rows):
            raise ShapeError("ragged interval matrix")
        object.__setattr__(self, "entries", rows)

    @classmethod
    def from_real(cls, m) -> IntervalMatrix:
        return cls(tuple(tuple(Interval.point(v) for v in row) for row in np.asarray(m, dtype=float)))

    @classmethod
    def from_bounds(cls, lo, hi) -> IntervalMatrix:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 2:
            raise ShapeError(f"bound arrays of shapes {lo.shape} and {hi.shape}")
        return cls(tuple(
            tuple(Interval(l, h) for l, h in zip(rl, rh)) for rl, rh in zip(lo, hi)
        ))

    @property
    def rows(self) -> int:
        return len(self.entries)

    @property
    def cols(self) -> int:
        return len(self.entries[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def row(self, i: int) -> tuple[Interval, ...]:
        return self.entries[i]

    @property
    def lo(self) -> np.ndarray:
        return np.array([[e.lo for e in r] for r in self.entries])

    @property
    def hi(self) -> np.ndarray:
        return np.array([[e.hi for e in r] for r in self.entries])


def mat_iv_vec(m: IntervalMatrix, v: Sequence[Interval]) -> list[Interval]:
    if m.cols != len(v):
        raise ShapeError(f"matrix with {m.cols} columns times vector of length {len(v)}")
    return [iv_sum(iv_mul(a, x) for a, x in zip(row, v)) for row in m.entries]


def mat_iv_mul(a: IntervalMatrix, b: IntervalMatrix) -> IntervalMatrix:
    if a.cols != b.rows:
        raise ShapeError(f"shapes {a.shape} and {b.shape} do not chain")
    cols = list(zip(*b.entries))
    return IntervalMatrix(tuple(
        tuple(iv_sum(iv_mul(x, y) for x, y in zip(row, col)) for col in cols)
        for row in a.entries
    ))


# -- batch kernels on (lo, hi) arrays ---------------------------------------

def arr_mul(alo, ahi, blo, bhi):
    """Elementwise interval product of broadcastable endpoint arrays."""
    p = [(alo, blo), (alo, bhi), (ahi, blo), (ahi, bhi)]
    lo = np.minimum.reduce([rd.vmul_down(x, y) for x, y in p])
    hi = np.maximum.reduce([rd.vmul_up(x, y) for x, y in p])
    return lo, hi


def arr_scale(w, xlo, xhi):
    """Point scalar(s) ``w`` times intervals ``[xlo, xhi]`` (broadcast)."""
    pos = w >= 0
    lo = np.where(pos, rd.vmul_down(w, xlo), rd.vmul_down(w, xhi))
    hi = np.where(pos, rd.vmul_up(w, xhi), rd.vmul_up(w, xlo))
    return lo, hi


def arr_abs(lo, hi):
    alo = np.where(lo >= 0, lo, np.where(hi <= 0, -hi, 0.0))
    ahi = np.maximum(np.abs(lo), np.abs(hi))
    return alo, ahi


def arr_affine(weights, bias, xlo, xhi):
    """Interval image of ``x -> W x + b`` for a batch of boxes.

    ``xlo``/``xhi`` have shape ``(k, n_in)``; the result has shape
    ``(k, n_out)``.  Terms are accumulated in column order and the bias is
    added last, each operation rounded outward.
    """
    k = xlo.shape[0]
    n_out, n_in = weights.shape
    lo = np.zeros((k, n_out))
    hi = np.zeros((k, n_out))
    for j in range(n_in):
        tlo, thi = arr_scale(weights[None, :, j], xlo[:, j:j + 1], xhi[:, j:j + 1])
        lo = rd.vadd_down(lo, tlo)
        hi = rd.vadd_up(hi, thi)
    lo = rd.vadd_down(lo, bias[None, :])
    hi = rd.vadd_up(hi, bias[None, :])
    return lo, hi


def arr_row_times_matrix(rlo, rhi, weights):
    """Interval row vectors ``r`` (shape ``(k, n_out)``) times point ``W``.

    Returns ``r W`` with shape ``(k, n_in)``, summing over rows of ``W`` in
    index order.
    """
    k = rlo.shape[0]
    n_out, n_in = weights.shape
    lo = np.zeros((k, n_in))
    hi = np.zeros((k, n_in))
    for i in range(n_out):
        tlo, thi = arr_scale(weights[None, i, :], rlo[:, i:i + 1], rhi[:, i:i + 1])
        lo = rd.vadd_down(lo, tlo)
        hi = rd.vadd_up(hi, thi)
    return lo, hi


def arr_norm1(lo, hi):
    """Row-wise interval 1-norm of ``(k, n)`` interval arrays."""
    alo, ahi = arr_abs(lo, hi)
    slo = np.zeros(lo.shape[0])
    shi = np.zeros(lo.shape[0])
    for j in range(lo.shape[1]):
        slo = rd.vadd_down(slo, alo[:, j])
        shi = rd.vadd_up(shi, ahi[:, j])
    return slo, shi


def bisect_arrays(lo, hi):
    """Bisect ``k`` boxes along all ``n`` dimensions into ``k * 2**n`` boxes.

    Children of box ``i`` occupy rows ``i * 2**n .. (i+1) * 2**n - 1`` and
    follow the ordering of :func:`box_bisect`.
    """
    k, n = lo.shape
    with np.errstate(over="ignore"):
        mid = (lo + hi) * 0.5
    bad = ~np.isfinite(mid)
    if bad.any():
        mid = np.where(bad, lo * 0.5 + hi * 0.5, mid)
    mid = np.clip(mid, lo, hi)
    # bit j of the child index (counted from the most significant) picks the
    # upper half of coordinate j
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
    upper = bits.astype(bool)[None, :, :]
    clo = np.where(upper, mid[:, None, :], lo[:, None, :])
    chi = np.where(upper, hi[:, None, :], mid[:, None, :])
    return clo.reshape(k * 2 ** n, n), chi.reshape(k * 2 ** n, n)
