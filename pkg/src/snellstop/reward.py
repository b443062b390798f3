"""Nonnegative reward families and payoff functions.

A :class:`Payoff` is a function ``f(level, state)`` that works on scalars
(exact for Fractions) and on numpy arrays, so the same object drives both the
tree/lattice engine and the Monte-Carlo module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import NegativeReward, NonMonotoneSequence, ParameterOutOfRange
from .model import Model, StoppingRule, expectation_under_rule, stopping_levels, to_number, \
    values_equal

PAYOFF_KINDS = ("put", "call", "digital_usc", "digital_lsc", "constant")


@dataclass(frozen=True)
class RewardFamily:
    values: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def __iter__(self):
        return iter(self.values)

    def pointwise_max(self, other: "RewardFamily") -> "RewardFamily":
        return RewardFamily(tuple(max(a, b) for a, b in zip(self, other)),
                            f"max({self.label}, {other.label})")


@dataclass(frozen=True)
class Payoff:
    """Built-in payoff ``f(level, state)``; ``strike`` doubles as the constant for 'constant'."""

    kind: str
    strike: object = 0

    def __post_init__(self):
        if self.kind not in PAYOFF_KINDS:
            raise ParameterOutOfRange(f"unknown payoff {self.kind!r}; choose from {PAYOFF_KINDS}")

    def __call__(self, level, x):
        k = self.strike
        if isinstance(x, np.ndarray):
            if self.kind == "put":
                return np.maximum(k - x, 0.0)
            if self.kind == "call":
                return np.maximum(x - k, 0.0)
            if self.kind == "digital_usc":
                return (x >= k).astype(float)
            if self.kind == "digital_lsc":
                return (x > k).astype(float)
            return np.full(x.shape, float(k))
        zero = x - x  # keeps the arithmetic of the state (Fraction or float)
        if self.kind == "put":
            return max(k - x, zero)
        if self.kind == "call":
            return max(x - k, zero)
        # literal comparisons; no epsilon so the USC/LSC distinction survives
        if self.kind == "digital_usc":
            return zero + 1 if x >= k else zero
        if self.kind == "digital_lsc":
            return zero + 1 if x > k else zero
        return zero + k


@dataclass(frozen=True)
class Discounted:
    """``exp(-rate * times[level]) * payoff(level, x)``; float arithmetic unless rate == 0."""

    payoff: Callable
    rate: float
    times: tuple = field(repr=False)

    def __call__(self, level, x):
        value = self.payoff(level, x)
        if self.rate == 0:
            return value
        return math.exp(-self.rate * float(self.times[level])) * value


def _as_arith(model: Model, value):
    if model.exact:
        if isinstance(value, (float, np.floating)):
            return Fraction(float(value))
        return Fraction(value)
    return float(value)


def from_function(model: Model, f: Callable, label: str = "") -> RewardFamily:
    values = []
    for nd in model.nodes:
        v = _as_arith(model, f(nd.level, nd.state))
        if v < 0:
            raise NegativeReward(f"reward {v} < 0 at node {nd.label} (level {nd.level})")
        values.append(v)
    return RewardFamily(tuple(values), label or getattr(f, "kind", "custom"))


def payoff(model: Model, kind: str, strike=0, rate: float = 0.0) -> RewardFamily:
    """Reward family of a built-in payoff, optionally discounted at ``rate``."""
    strike = to_number(strike, model.arithmetic)
    f = Payoff(kind, strike)
    if rate:
        if model.exact:
            raise ParameterOutOfRange("discounting needs float arithmetic")
        f = Discounted(f, rate, model.grid.times)
    label = kind if kind == "constant" else f"{kind}({strike})"
    return from_function(model, f, label)


def put(model: Model, strike, rate: float = 0.0) -> RewardFamily:
    return payoff(model, "put", strike, rate)


def call(model: Model, strike, rate: float = 0.0) -> RewardFamily:
    return payoff(model, "call", strike, rate)


def digital_usc(model: Model, strike) -> RewardFamily:
    """Indicator of ``{x >= K}``: upper semicontinuous in x."""
    return payoff(model, "digital_usc", strike)


def digital_lsc(model: Model, strike) -> RewardFamily:
    """Indicator of ``{x > K}``: lower semicontinuous in x."""
    return payoff(model, "digital_lsc", strike)


def constant(model: Model, c) -> RewardFamily:
    c = to_number(c, model.arithmetic)
    if c < 0:
        raise NegativeReward(f"constant reward {c} < 0")
    return RewardFamily(tuple(c for _ in model.nodes), f"constant({c})")


def path_lookback_max(model: Model) -> RewardFamily:
    """phi(node) = largest state seen on the path from the root to the node."""
    model.require_tree("path_lookback_max")
    values = [None] * len(model)
    values[model.root] = model.nodes[model.root].state
    for ids in model.levels:
        for i in ids:
            for c, _ in model.nodes[i].children:
                values[c] = max(values[i], model.nodes[c].state)
    return RewardFamily(tuple(values), "lookback_max")


def by_name(model: Model, name: str, **params) -> RewardFamily:
    """Resolve a payoff name as used in config files."""
    if name == "lookback_max":
        return path_lookback_max(model)
    if name == "constant":
        return constant(model, params.get("c", params.get("value", 0)))
    if name not in PAYOFF_KINDS:
        raise ParameterOutOfRange(f"unknown payoff {name!r}")
    if "strike" not in params and "K" not in params:
        raise ParameterOutOfRange(f"payoff {name!r} needs a strike")
    strike = params.get("strike", params.get("K"))
    return payoff(model, name, strike, float(params.get("rate", 0.0)))


@dataclass
class USCReport:
    expectations: list
    limit_value: object
    limsup_estimate: object
    tail_equal: bool
    violation: bool
    note: str = ("finite-sample check on a fixed grid; it cannot establish "
                 "upper semicontinuity in expectation, only exhibit a violation")


def usc_in_expectation_diagnostic(model: Model, reward: RewardFamily,
                                  rules: Sequence[StoppingRule], limit: StoppingRule,
                                  tail: int = 1) -> USCReport:
    """Compare limsup of E[phi(theta_n)] with E[phi(limit)] along theta_n increasing to limit.

    When the sequence ends on ``limit`` itself the limsup is the limit value
    (tail equality); otherwise the largest of the last ``tail`` expectations
    stands in for the limsup.
    """
    if not rules:
        raise NonMonotoneSequence("empty stopping-time sequence")
    taus = [stopping_levels(model, r) for r in rules]
    lim = stopping_levels(model, limit)
    for a, b in zip(taus, taus[1:]):
        if any(x > y for x, y in zip(a, b)):
            raise NonMonotoneSequence("stopping times are not pathwise nondecreasing")
    if any(x > y for x, y in zip(taus[-1], lim)):
        raise NonMonotoneSequence("last stopping time exceeds the limit")
    exps = [expectation_under_rule(model, r, reward) for r in rules]
    limit_value = expectation_under_rule(model, limit, reward)
    tail_equal = taus[-1] == lim
    limsup = limit_value if tail_equal else max(exps[-tail:])
    violation = limsup > limit_value and not values_equal(limsup, limit_value, model.exact)
    return USCReport(exps, limit_value, limsup, tail_equal, violation)
