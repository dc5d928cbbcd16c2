"""Interval enclosures of network gradients over hyperboxes.

The forward pass records the pre-activation enclosure of every hidden layer.
Each activation contributes a diagonal interval matrix of derivative bounds,
and the Jacobian is the chained product ``W_out D_H W_H ... D_1 W_1``, formed
from the output side as a running interval row vector.  On any box it
contains the Clarke gradient of every point of the box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lipcert.interval import (
    HyperBox,
    Interval,
    IntervalMatrix,
    ShapeError,
    arr_mul,
    arr_norm1,
    arr_row_times_matrix,
    box_norm1,
)
from lipcert.network import (
    ActivationKind,
    Network,
    _box_arrays,
    _widen,
    forward_arrays,
)


def _sigmoid_prime(x):
    e = np.exp(-np.abs(x))
    t = 1.0 + e
    return e / (t * t)


def _tanh_prime(x):
    e = np.exp(-2.0 * np.abs(x))
    t = 1.0 + e
    return 4.0 * e / (t * t)


def _unimodal_bounds(fn, peak, lo, hi):
    """Enclosure of an even function that increases on x<0 and decreases on x>0."""
    f_lo = fn(lo)
    f_hi = fn(hi)
    straddle = (lo <= 0) & (hi >= 0)
    # monotone pieces: on x <= 0 the image is [f(lo), f(hi)], on x >= 0 reversed
    low = np.where(hi <= 0, f_lo, np.where(lo >= 0, f_hi, np.minimum(f_lo, f_hi)))
    high = np.where(hi <= 0, f_hi, f_lo)
    low = np.maximum(_widen(low, True), 0.0)
    high = np.minimum(_widen(high, False), peak)
    high = np.where(straddle, peak, high)
    # f(0) = peak is exact
    low = np.where((lo == 0) & (hi == 0), peak, low)
    return low, high


def activation_grad_arrays(kind: ActivationKind, lo, hi):
    """Derivative enclosures of ``kind`` over intervals ``[lo, hi]``."""
    if kind is ActivationKind.RELU:
        dlo = np.where(lo > 0, 1.0, 0.0)
        dhi = np.where(hi < 0, 0.0, 1.0)
        return dlo, dhi
    if kind is ActivationKind.SIGMOID:
        return _unimodal_bounds(_sigmoid_prime, 0.25, lo, hi)
    if kind is ActivationKind.TANH:
        return _unimodal_bounds(_tanh_prime, 1.0, lo, hi)
    return np.ones_like(lo), np.ones_like(hi)


def activation_grad_interval(kind, z: Interval) -> Interval:
    lo, hi = activation_grad_arrays(ActivationKind.parse(kind), np.array(z.lo), np.array(z.hi))
    return Interval(float(lo), float(hi))


def jacobian_rows(net: Network, lo, hi, outputs=None):
    """Batched interval Jacobian rows.

    ``lo``/``hi`` are ``(k, n)`` box arrays.  Returns a list with one
    ``(row_lo, row_hi)`` pair of ``(k, n)`` arrays per requested output.
    """
    _, _, pre = forward_arrays(net, lo, hi, keep_preactivations=True)
    derivs = []
    for layer, p in zip(net.layers, pre):
        if p is None:
            derivs.append(None)
        else:
            derivs.append(activation_grad_arrays(layer.activation, *p))
    out_layer = net.layers[-1]
    k = lo.shape[0]
    outputs = range(net.output_count) if outputs is None else outputs
    rows = []
    for j in outputs:
        w = out_layer.weights[j]
        rlo = np.broadcast_to(w, (k, w.size)).copy()
        rhi = rlo.copy()
        for layer, d in zip(reversed(net.layers[:-1]), reversed(derivs[:-1])):
            if d is not None:
                rlo, rhi = arr_mul(rlo, rhi, d[0], d[1])
            rlo, rhi = arr_row_times_matrix(rlo, rhi, layer.weights)
        rows.append((rlo, rhi))
    return rows


def grad_norm1_arrays(net: Network, lo, hi, output: int = 0):
    """Interval 1-norm of the gradient of one output for a batch of boxes."""
    if not 0 <= output < net.output_count:
        raise IndexError(f"output {output} out of range for {net.output_count} outputs")
    ((rlo, rhi),) = jacobian_rows(net, lo, hi, [output])
    return arr_norm1(rlo, rhi)


@dataclass(frozen=True)
class GradEnclosure:
    jacobian: IntervalMatrix
    norm1_per_output: tuple[Interval, ...]

    def __post_init__(self):
        if len(self.norm1_per_output) != self.jacobian.rows:
            raise ShapeError("one norm per jacobian row is required")


def interval_jacobian(net: Network, box: HyperBox) -> GradEnclosure:
    """Interval Jacobian of the network over ``box`` and its row 1-norms."""
    if box.dims != net.input_dim:
        raise ShapeError(f"box of dimension {box.dims}, network expects {net.input_dim}")
    lo, hi = _box_arrays(box)
    rows = jacobian_rows(net, lo, hi)
    jac = IntervalMatrix.from_bounds(
        np.vstack([r[0] for r in rows]), np.vstack([r[1] for r in rows])
    )
    norms = tuple(box_norm1(jac.row(i)) for i in range(jac.rows))
    return GradEnclosure(jac, norms)


def grad_norm1(net: Network, box: HyperBox, output: int = 0) -> Interval:
    if box.dims != net.input_dim:
        raise ShapeError(f"box of dimension {box.dims}, network expects {net.input_dim}")
    lo, hi = grad_norm1_arrays(net, *_box_arrays(box), output=output)
    return Interval(float(lo[0]), float(hi[0]))


class GradNormObjective:
    """``box -> ||grad N_output(box)||_1`` as a sound interval objective.

    Exposes both the scalar call used by generic code and the batched
    ``evaluate_batch`` used by :func:`lipcert.maximize.maximize`.
    """

    def __init__(self, net: Network, output: int = 0):
        if not 0 <= output < net.output_count:
            raise IndexError(f"output {output} out of range for {net.output_count} outputs")
        self.net = net
        self.output = output

    def __call__(self, box: HyperBox) -> Interval:
        return grad_norm1(self.net, box, self.output)

    def evaluate_batch(self, lo, hi):
        return grad_norm1_arrays(self.net, lo, hi, self.output)
