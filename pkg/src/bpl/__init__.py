"""Bayesian support-boundary recovery from Poisson point process data."""
from .model import (
    BandError,
    ClassSpec,
    InfeasibleClassError,
    PointSet,
    StepFn,
    Truth,
    integral,
    is_member,
    l1_dist,
    l1_dist_truth,
    make_ms_truth,
    range_min,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "BandError",
    "ClassSpec",
    "InfeasibleClassError",
    "PointSet",
    "StepFn",
    "Truth",
    "integral",
    "is_member",
    "l1_dist",
    "l1_dist_truth",
    "make_ms_truth",
    "range_min",
    "simulate",
]
