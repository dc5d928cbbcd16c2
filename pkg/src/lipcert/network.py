"""Feedforward networks: data model, JSON format and forward evaluation.

A network is a list of affine layers ``z -> act(W z + b)``.  Hidden layers
carry ReLU, sigmoid, tanh or identity activations; the last layer is the
output map and always carries the identity.  ``W`` has shape
``(n_out, n_in)`` and acts on column vectors.
"""

from __future__ import annotations

import enum
import hashlib
import io
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from lipcert import rounding as rd
from lipcert.interval import (
    HyperBox,
    Interval,
    ShapeError,
    arr_affine,
)


class NetworkFormatError(ValueError):
    """The network file is not valid JSON or misses required fields."""


class ActivationKind(enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, name) -> ActivationKind:
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise NetworkFormatError(f"unknown activation {name!r}") from None


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: ActivationKind = ActivationKind.IDENTITY

    def __post_init__(self):
        w = _frozen(self.weights)
        b = _frozen(self.biases)
        if w.ndim != 2 or w.shape[0] == 0 or w.shape[1] == 0:
            raise ShapeError(f"weights must be a nonempty matrix, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"biases of shape {b.shape} do not match weights {w.shape}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("non-finite weight or bias")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "activation", ActivationKind.parse(self.activation))

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class Network:
    input_dim: int
    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ShapeError("network has no layers")
        width = self.input_dim
        for i, layer in enumerate(layers):
            if layer.n_in != width:
                err = ShapeError(
                    f"layer {i}: weights have {layer.n_in} columns, expected {width}"
                )
                err.layer = i
                raise err
            width = layer.n_out
        if layers[-1].activation is not ActivationKind.IDENTITY:
            err = ShapeError("the output layer must have identity activation")
            err.layer = len(layers) - 1
            raise err

    @property
    def output_count(self) -> int:
        return self.layers[-1].n_out

    @property
    def hidden(self) -> tuple[Layer, ...]:
        return self.layers[:-1]

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [l.n_out for l in self.layers]

    def to_json(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layers": [
                {
                    "weights": [[repr(float(v)) for v in row] for row in l.weights],
                    "biases": [repr(float(v)) for v in l.biases],
                    "activation": l.activation.value,
                }
                for l in self.layers
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def _number(v, where: str) -> float:
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise NetworkFormatError(f"{where}: {v!r} is not a number") from None
    if not math.isfinite(x):
        raise ValueError(f"{where}: non-finite value {v!r}")
    return x


def network_from_json(obj: dict) -> Network:
    if not isinstance(obj, dict) or "layers" not in obj or "input_dim" not in obj:
        raise NetworkFormatError("expected an object with 'input_dim' and 'layers'")
    raw_layers = obj["layers"]
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ShapeError("network has no layers")
    layers = []
    for i, raw in enumerate(raw_layers):
        try:
            rows = raw["weights"]
        except (KeyError, TypeError):
            raise NetworkFormatError(f"layer {i}: missing 'weights'") from None
        if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
            raise ShapeError(f"layer {i}: weights must be a nonempty list of rows")
        if len({len(r) for r in rows}) != 1:
            raise ShapeError(f"layer {i}: ragged weight matrix")
        w = [[_number(v, f"layer {i} weights") for v in r] for r in rows]
        last = i == len(raw_layers) - 1
        raw_b = raw.get("biases")
        if raw_b is None:
            if not last:
                raise NetworkFormatError(f"layer {i}: missing 'biases'")
            raw_b = [0.0] * len(w)
        b = [_number(v, f"layer {i} biases") for v in raw_b]
        act = raw.get("activation", "identity" if last else None)
        if act is None:
            raise NetworkFormatError(f"layer {i}: missing 'activation'")
        try:
            layers.append(Layer(w, b, ActivationKind.parse(act)))
        except ShapeError as e:
            err = ShapeError(f"layer {i}: {e}")
            err.layer = i
            raise err from None
    try:
        input_dim = int(obj["input_dim"])
    except (TypeError, ValueError):
        raise NetworkFormatError("input_dim must be an integer") from None
    return Network(input_dim, tuple(layers))


def load_network(source) -> Network:
    """Parse a network from JSON text, bytes, a binary/text stream or a path."""
    if isinstance(source, Path):
        source = source.read_bytes()
    elif isinstance(source, (io.IOBase,)) or hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        obj = json.loads(source)
    except json.JSONDecodeError as e:
        raise NetworkFormatError(f"invalid JSON: {e}") from None
    return network_from_json(obj)


def read_network(path) -> Network:
    return load_network(Path(path))


# -- input regions ----------------------------------------------------------

@dataclass(frozen=True)
class InputRegion:
    """Either an inf-norm ball ``(center, radius)`` or an explicit box."""

    center: tuple[float, ...] | None = None
    radius: float | None = None
    box: HyperBox | None = None
    clip_domain: HyperBox | None = None

    def __post_init__(self):
        if (self.box is None) == (self.center is None):
            raise ValueError("give exactly one of center/radius or box")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
            if self.radius is None or not self.radius >= 0:
                raise ValueError("radius must be a nonnegative number")
            object.__setattr__(self, "radius", float(self.radius))

    @property
    def dims(self) -> int:
        return len(self.center) if self.center is not None else self.box.dims

    def to_box(self) -> HyperBox:
        box = self.box if self.box is not None else HyperBox.ball(self.center, self.radius)
        if self.clip_domain is None:
            return box
        if self.clip_domain.dims != box.dims:
            raise ShapeError("clip domain has the wrong dimension")
        coords = []
        for c, d in zip(box.coords, self.clip_domain.coords):
            lo, hi = max(c.lo, d.lo), min(c.hi, d.hi)
            if lo > hi:
                raise ValueError("region does not meet the clip domain")
            coords.append(Interval(lo, hi))
        return HyperBox(tuple(coords))

    def to_boxes(self, max_pieces: int = 1) -> list[HyperBox]:
        """The region as a finite union of boxes.

        A ball is split at its center into the ``2**n`` orthant boxes when that
        many pieces fit in ``max_pieces``, so the center lies on a corner of
        every piece instead of inside one box.  Explicit boxes and balls that
        are too high-dimensional come back as a single box.
        """
        box = self.to_box()
        if self.center is None or 2 ** self.dims > max_pieces:
            return [box]
        axes = []
        for c, iv in zip(self.center, box.coords):
            if iv.lo < c < iv.hi:
                axes.append((Interval(iv.lo, c), Interval(c, iv.hi)))
            else:
                axes.append((iv,))
        return [HyperBox(coords) for coords in itertools.product(*axes)]

    def to_json(self) -> dict:
        out = {}
        if self.center is not None:
            out["center"] = [repr(c) for c in self.center]
            out["radius"] = repr(self.radius)
        else:
            out["box"] = self.box.to_json()
        if self.clip_domain is not None:
            out["clip_domain"] = self.clip_domain.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> InputRegion:
        clip = obj.get("clip_domain")
        clip = HyperBox.from_json(clip) if clip is not None else None
        if "box" in obj:
            return cls(box=HyperBox.from_json(obj["box"]), clip_domain=clip)
        return cls(
            center=tuple(float(c) for c in obj["center"]),
            radius=float(obj["radius"]),
            clip_domain=clip,
        )


# -- real evaluation --------------------------------------------------------

def _act_real(kind: ActivationKind, z):
    if kind is ActivationKind.RELU:
        return np.maximum(z, 0.0)
    if kind is ActivationKind.SIGMOID:
        return _sigmoid(z)
    if kind is ActivationKind.TANH:
        return np.tanh(z)
    return z


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def eval_real(net: Network, x) -> np.ndarray:
    """Round-to-nearest forward pass.  ``x`` may be a point or a ``(k, n)`` batch."""
    z = np.asarray(x, dtype=np.float64)
    single = z.ndim == 1
    if z.shape[-1] != net.input_dim:
        raise ShapeError(f"input of dimension {z.shape[-1]}, network expects {net.input_dim}")
    z = np.atleast_2d(z)
    for layer in net.layers:
        z = _act_real(layer.activation, z @ layer.weights.T + layer.biases)
    return z[0] if single else z


# -- interval evaluation ----------------------------------------------------

# endpoint images of exp-based functions are computed in round-to-nearest and
# then widened by this many ulps
TRANSCENDENTAL_ULPS = 16
_TINY = 2.0 ** -1000


def _widen(v, lower: bool):
    """Directed enclosure bound of a transcendental value computed as ``v``."""
    if lower:
        out = rd.vstep_down(v, TRANSCENDENTAL_ULPS)
        return np.where(np.abs(v) < _TINY, np.minimum(out, -_TINY * 2), out)
    out = rd.vstep_up(v, TRANSCENDENTAL_ULPS)
    return np.where(np.abs(v) < _TINY, np.maximum(out, _TINY * 2), out)


def sigmoid_bound(x, lower: bool):
    """Rigorous lower (or upper) bound of the logistic function at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    v = _widen(_sigmoid(x), lower)
    v = np.clip(v, 0.0, 1.0)
    return np.where(x == 0, 0.5, v)


def tanh_bound(x, lower: bool):
    x = np.asarray(x, dtype=np.float64)
    v = np.clip(_widen(np.tanh(x), lower), -1.0, 1.0)
    return np.where(x == 0, 0.0, v)


def activation_arrays(kind: ActivationKind, lo, hi):
    """Interval image of a monotone activation on endpoint arrays."""
    if kind is ActivationKind.RELU:
        return np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    if kind is ActivationKind.SIGMOID:
        return sigmoid_bound(lo, True), sigmoid_bound(hi, False)
    if kind is ActivationKind.TANH:
        return tanh_bound(lo, True), tanh_bound(hi, False)
    return lo, hi


def interval_activation(kind, z: Interval) -> Interval:
    lo, hi = activation_arrays(ActivationKind.parse(kind), np.array(z.lo), np.array(z.hi))
    return Interval(float(lo), float(hi))


def _box_arrays(box) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(box, HyperBox):
        return box.lo[None, :], box.hi[None, :]
    lo, hi = box
    return np.atleast_2d(np.asarray(lo, dtype=float)), np.atleast_2d(np.asarray(hi, dtype=float))


def forward_arrays(net: Network, lo, hi, keep_preactivations: bool = False):
    """Interval forward pass on a batch of boxes given as ``(k, n)`` arrays.

    Returns ``(out_lo, out_hi, pre)`` where ``pre`` lists the pre-activation
    enclosures of every hidden layer when requested (else is empty).
    """
    if lo.shape[1] != net.input_dim:
        raise ShapeError(f"box of dimension {lo.shape[1]}, network expects {net.input_dim}")
    pre = []
    for layer in net.layers:
        lo, hi = arr_affine(layer.weights, layer.biases, lo, hi)
        if keep_preactivations and layer.activation is not ActivationKind.IDENTITY:
            pre.append((lo, hi))
        elif keep_preactivations:
            pre.append(None)
        lo, hi = activation_arrays(layer.activation, lo, hi)
    return lo, hi, pre


def eval_interval(net: Network, box: HyperBox) -> list[Interval]:
    """Natural interval extension of the network over ``box``."""
    if box.dims != net.input_dim:
        raise ShapeError(f"box of dimension {box.dims}, network expects {net.input_dim}")
    lo, hi, _ = forward_arrays(net, *_box_arrays(box))
    return [Interval(l, h) for l, h in zip(lo[0], hi[0])]


def preactivation_intervals(net: Network, box: HyperBox) -> list[list[Interval]]:
    """Pre-activation enclosures of every hidden layer over ``box``."""
    _, _, pre = forward_arrays(net, *_box_arrays(box), keep_preactivations=True)
    return [[Interval(l, h) for l, h in zip(p[0][0], p[1][0])] for p in pre if p is not None]


def difference_network(net: Network, i0: int, i: int) -> Network:
    """Single-output network computing ``N_i0 - N_i``.

    The output rows are subtracted directly when every entry difference is
    exact in binary64.  Otherwise the two rows are kept as an identity layer
    followed by the exact row ``[1, -1]``, so the result still computes the
    difference exactly in real arithmetic.
    """
    m = net.output_count
    if not (0 <= i0 < m and 0 <= i < m):
        raise IndexError(f"output indices ({i0}, {i}) out of range for {m} outputs")
    if i0 == i:
        raise ValueError("difference of an output with itself")
    out = net.layers[-1]
    a = np.append(out.weights[i0], out.biases[i0])
    b = np.append(out.weights[i], out.biases[i])
    diff = a - b
    if np.all(rd.two_sum_err(a, -b, diff) == 0) and np.all(np.isfinite(diff)):
        last = (Layer(diff[None, :-1], diff[-1:], ActivationKind.IDENTITY),)
    else:
        pair = Layer(out.weights[[i0, i]], out.biases[[i0, i]], ActivationKind.IDENTITY)
        last = (pair, Layer([[1.0, -1.0]], [0.0], ActivationKind.IDENTITY))
    return Network(net.input_dim, net.layers[:-1] + last)


def select_output(net: Network, j: int) -> Network:
    """Single-output network computing ``N_j``."""
    if not 0 <= j < net.output_count:
        raise IndexError(f"output {j} out of range for {net.output_count} outputs")
    out = net.layers[-1]
    last = Layer(out.weights[j:j + 1], out.biases[j:j + 1], ActivationKind.IDENTITY)
    return Network(net.input_dim, net.layers[:-1] + (last,))


def random_network(rng, sizes: Sequence[int], activation="relu", scale: float = 1.0,
                   bias_scale: float | None = None) -> Network:
    """Network with Gaussian weights for the given layer sizes ``[n, h1, ..., m]``."""
    act = ActivationKind.parse(activation)
    bias_scale = scale if bias_scale is None else bias_scale
    layers = []
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        w = rng.normal(0.0, scale / math.sqrt(a), size=(b, a))
        bias = np.zeros(b) if last else rng.normal(0.0, bias_scale, size=b)
        layers.append(Layer(w, bias, ActivationKind.IDENTITY if last else act))
    return Network(sizes[0], tuple(layers))
