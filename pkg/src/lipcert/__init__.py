"""Validated local Lipschitz constants of feedforward networks.

Interval arithmetic with outward rounding, interval gradients via the
hyperbox chain rule and a branch-and-bound maximizer combine into guaranteed
enclosures of the maximal gradient norm over an input region.
"""

from lipcert.gradient import GradEnclosure, GradNormObjective, grad_norm1, interval_jacobian
from lipcert.interval import HyperBox, Interval, IntervalMatrix, ShapeError
from lipcert.lipschitz import (
    ClassRobustnessReport,
    LipschitzReport,
    certified_radius,
    lipschitz_enclosure,
    possible_classes,
)
from lipcert.maximize import MaxParams, MaxResult, StopReason, maximize
from lipcert.network import (
    ActivationKind,
    InputRegion,
    Layer,
    Network,
    NetworkFormatError,
    difference_network,
    eval_interval,
    eval_real,
    load_network,
    read_network,
)

__all__ = [
    "ActivationKind", "ClassRobustnessReport", "GradEnclosure", "GradNormObjective",
    "HyperBox", "InputRegion", "Interval", "IntervalMatrix", "Layer", "LipschitzReport",
    "MaxParams", "MaxResult", "Network", "NetworkFormatError", "ShapeError", "StopReason",
    "certified_radius", "difference_network", "eval_interval", "eval_real", "grad_norm1",
    "interval_jacobian", "lipschitz_enclosure", "load_network", "maximize",
    "possible_classes", "read_network",
]
