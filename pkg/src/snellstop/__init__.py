"""Discrete-time optimal stopping: Snell envelopes, extremal optimal times, oracle checks."""
from .model import (
    Arithmetic,
    Decision,
    Model,
    ModelKind,
    StoppingRule,
    TimeGrid,
    build_binomial,
    build_crr,
    build_from_spec,
    conditional_expectation,
    expectation_under_rule,
    is_valid_rule,
    path_measure,
)
from . import reward
from .reward import RewardFamily
from .snell import SnellResult, compute

__all__ = [
    "Arithmetic", "Decision", "Model", "ModelKind", "StoppingRule", "TimeGrid",
    "build_binomial", "build_crr", "build_from_spec", "conditional_expectation",
    "expectation_under_rule", "is_valid_rule", "path_measure", "RewardFamily",
    "SnellResult", "compute",
]
