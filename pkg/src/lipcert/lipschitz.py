"""Local Lipschitz constants of networks and classifier robustness helpers.

The local Lipschitz constant of an output with respect to the inf-norm on
inputs is the maximum 1-norm of its Clarke gradient over the region.
:func:`lipschitz_enclosure` maximizes the interval gradient norm with the
branch-and-bound search, which yields a guaranteed enclosure of that
constant together with boxes covering the points where it is attained.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from lipcert.gradient import GradNormObjective
from lipcert.interval import HyperBox, Interval, ShapeError
from lipcert.maximize import MaxParams, MaxResult, StopReason, TraceRow, maximize
from lipcert.network import (
    InputRegion,
    Network,
    difference_network,
    eval_interval,
    eval_real,
)

REPORT_VERSION = 1


@dataclass(frozen=True, eq=False)
class LipschitzReport:
    network_sha256: str
    region: InputRegion
    output: int
    result: MaxResult
    params: MaxParams
    wall_ms: float

    @property
    def value(self) -> Interval:
        return self.result.value

    def to_json(self) -> dict:
        r = self.result
        return {
            "version": REPORT_VERSION,
            "network_sha256": self.network_sha256,
            "region": self.region.to_json(),
            "output": self.output,
            "params": self.params.to_json(),
            "value": r.value.to_json(),
            "max_set_boxes": [b.to_json() for b in r.boxes],
            "iterations": r.iterations,
            "trace": [row.to_json() for row in r.trace],
            "stop_reason": r.stop_reason.value,
            "wall_ms": self.wall_ms,
        }

    @classmethod
    def from_json(cls, obj: dict) -> LipschitzReport:
        if obj.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {obj.get('version')!r}")
        boxes = [HyperBox.from_json(b) for b in obj["max_set_boxes"]]
        result = MaxResult(
            Interval.from_json(obj["value"]),
            np.array([b.lo for b in boxes]),
            np.array([b.hi for b in boxes]),
            int(obj["iterations"]),
            StopReason(obj["stop_reason"]),
            tuple(TraceRow.from_json(t) for t in obj["trace"]),
        )
        return cls(
            obj["network_sha256"],
            InputRegion.from_json(obj["region"]),
            int(obj["output"]),
            result,
            MaxParams.from_json(obj["params"]),
            float(obj["wall_ms"]),
        )


def lipschitz_enclosure(net: Network, region: InputRegion, output: int = 0,
                        params: MaxParams = MaxParams(), threads: int = 1) -> LipschitzReport:
    """Enclose the local Lipschitz constant of output ``output`` over ``region``.

    Returns a report whose ``value`` contains the maximum of the gradient
    1-norm over the region and whose boxes cover the maximizers.
    """
    if region.dims != net.input_dim:
        raise ShapeError(f"region of dimension {region.dims}, network expects {net.input_dim}")
    start = time.perf_counter()
    boxes = region.to_boxes(params.max_boxes)
    result = maximize(GradNormObjective(net, output), boxes, params, threads=threads)
    wall_ms = (time.perf_counter() - start) * 1000.0
    return LipschitzReport(net.digest(), region, output, result, params, wall_ms)


def possible_classes(net: Network, box: HyperBox) -> set[int]:
    """Classes that may win the argmax somewhere in ``box``.

    Class ``i`` is kept when its upper output bound reaches the largest lower
    bound; every class realized at a point of the box is in the set.
    """
    if net.output_count < 2:
        raise ValueError("a classifier needs at least two outputs")
    outs = eval_interval(net, box)
    best_lo = max(o.lo for o in outs)
    return {i for i, o in enumerate(outs) if o.hi >= best_lo}


@dataclass(frozen=True)
class CompetitorBound:
    index: int
    margin: Interval
    lipschitz: Interval
    radius: float

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "margin": self.margin.to_json(),
            "lipschitz": self.lipschitz.to_json(),
            "radius": repr(self.radius),
        }


@dataclass(frozen=True)
class ClassRobustnessReport:
    x0: tuple[float, ...]
    predicted: int
    competitors: tuple[CompetitorBound, ...]
    radius: float
    possible: frozenset[int]

    def to_json(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "x0": [repr(v) for v in self.x0],
            "predicted": self.predicted,
            "competitors": [c.to_json() for c in self.competitors],
            "radius": repr(self.radius),
            "possible_classes": sorted(self.possible),
        }


def _radius_bound(margin_lo: float, lip_hi: float, cap: float) -> float:
    """Largest safe radius ``margin / L`` rounded toward zero, clamped to ``cap``."""
    if not margin_lo > 0:
        return 0.0
    if lip_hi == 0:
        return cap
    q = margin_lo / lip_hi
    # two steps down: one covers the division rounding, one keeps the margin strict
    q = math.nextafter(math.nextafter(q, 0.0), 0.0)
    return min(max(q, 0.0), cap)


def certified_radius(net: Network, x0, search_radius: float,
                     params: MaxParams = MaxParams(), threads: int = 1) -> ClassRobustnessReport:
    """Inf-norm radius around ``x0`` within which the argmax class cannot change.

    For each competitor ``i`` the margin ``N_i0 - N_i`` at ``x0`` is divided
    by a certified Lipschitz bound of the difference network over the ball of
    ``search_radius``.  The result is clamped to ``search_radius``, and is 0
    when ``x0`` is not strictly inside one class.
    """
    if net.output_count < 2:
        raise ValueError("a classifier needs at least two outputs")
    if not search_radius > 0:
        raise ValueError("search_radius must be positive")
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (net.input_dim,):
        raise ShapeError(f"point of shape {x0.shape}, network expects ({net.input_dim},)")
    predicted = int(np.argmax(eval_real(net, x0)))
    point = HyperBox.from_point(x0)
    ball = InputRegion(center=tuple(x0), radius=search_radius)
    competitors = []
    for i in range(net.output_count):
        if i == predicted:
            continue
        diff = difference_network(net, predicted, i)
        margin = eval_interval(diff, point)[0]
        lip = lipschitz_enclosure(diff, ball, 0, params, threads).value
        competitors.append(CompetitorBound(i, margin, lip, _radius_bound(margin.lo, lip.hi, search_radius)))
    radius = min(c.radius for c in competitors)
    possible = possible_classes(net, HyperBox.ball(x0, radius))
    return ClassRobustnessReport(tuple(float(v) for v in x0), predicted, tuple(competitors),
                                 radius, frozenset(possible))
