"""Optimal, maximal-optimal and epsilon-optimal stopping rules.

All rules accept a start rule ``start`` (the stopping time S); ``None`` means
S = 0. The returned rule induces the stopping time directly from the root: it
only stops at nodes where S has already been reached.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from fractions import Fraction

from .errors import EpsilonOutOfRange, NearTieWarning, StaleResult, WindowOrderViolation
from .model import (
    Model,
    StoppingRule,
    expectation_under_rule,
    reached,
    require_valid,
    stopping_levels,
    time_distribution,
    values_equal,
)
from .snell import CheckReport, DoobDecomposition, SnellResult


class EpsilonKind(enum.Enum):
    MULTIPLICATIVE = "multiplicative"
    ADDITIVE = "additive"


@dataclass(frozen=True)
class EpsilonMode:
    kind: EpsilonKind
    epsilon: object

    def __post_init__(self):
        object.__setattr__(self, "kind", EpsilonKind(self.kind))
        if not 0 < self.epsilon < 1:
            raise EpsilonOutOfRange(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @classmethod
    def multiplicative(cls, epsilon):
        return cls(EpsilonKind.MULTIPLICATIVE, epsilon)

    @classmethod
    def additive(cls, epsilon):
        return cls(EpsilonKind.ADDITIVE, epsilon)


@dataclass
class StoppingReport:
    rule: StoppingRule
    value: object
    gap: object
    time_distribution: dict


def _fresh(result: SnellResult, reward) -> SnellResult:
    if reward is not None and tuple(getattr(reward, "values", reward)) != result.reward.values:
        raise StaleResult("reward differs from the one the envelope was computed for")
    return result


def _warn_near_ties(model: Model, pairs, what: str):
    if model.exact:
        return
    ties = [i for i, a, b in pairs if a != b and values_equal(a, b, False)]
    if ties:
        warnings.warn(f"{what}: {len(ties)} near-tie node(s) decided by tolerance: {ties[:10]}",
                      NearTieWarning, stacklevel=3)


def _rule(model: Model, start, stop_here) -> StoppingRule:
    armed = reached(model, start)
    n = model.n_steps
    return StoppingRule(tuple(armed[nd.id] and (nd.level == n or stop_here(nd.id))
                              for nd in model.nodes))


def exercise_region(result: SnellResult, reward=None) -> set:
    """Nodes where the envelope equals the reward."""
    result = _fresh(result, reward)
    phi, exact = result.reward.values, result.model.exact
    return {i for i, (a, b) in enumerate(zip(result.v, phi)) if values_equal(a, b, exact)}


def minimal_optimal(result: SnellResult, reward=None, start=None) -> StoppingRule:
    """First node at or after ``start`` where v = phi."""
    result = _fresh(result, reward)
    model = result.model
    phi = result.reward.values
    _warn_near_ties(model, ((i, result.v[i], phi[i]) for i in range(len(model))), "v = phi")
    region = exercise_region(result)
    return _rule(model, start, region.__contains__)


def maximal_optimal(result: SnellResult, reward=None, start=None) -> StoppingRule:
    """First node at or after ``start`` where v > continuation.

    At ties v = phi = continuation it keeps going, which is what makes the
    rule the latest optimal one.
    """
    result = _fresh(result, reward)
    model = result.model
    _warn_near_ties(model, ((nd.id, result.v[nd.id], result.continuation[nd.id])
                            for nd in model.nodes if nd.children), "v = continuation")

    def strict(i):
        v, c = result.v[i], result.continuation[i]
        return v > c and not values_equal(v, c, model.exact)

    return _rule(model, start, strict)


def epsilon_optimal(result: SnellResult, reward, mode: EpsilonMode, start=None) -> StoppingRule:
    """Penalised rule: stop once phi >= (1 - eps) v (or phi >= v - eps)."""
    result = _fresh(result, reward)
    phi, v = result.reward.values, result.v
    eps = mode.epsilon
    if result.model.exact and isinstance(eps, float):
        eps = Fraction(eps)
    if mode.kind is EpsilonKind.MULTIPLICATIVE:
        def close(i):
            return phi[i] >= (1 - eps) * v[i]
    else:
        def close(i):
            return phi[i] >= v[i] - eps
    return _rule(result.model, start, close)


def epsilon_threshold(result: SnellResult, reward=None, kind=EpsilonKind.MULTIPLICATIVE):
    """Smallest positive gap (v - phi)/v (or v - phi) over all nodes.

    For every epsilon strictly below this value the penalised rule coincides
    with :func:`minimal_optimal`. Returns 1 when v = phi everywhere.
    """
    result = _fresh(result, reward)
    kind = EpsilonKind(kind)
    phi, v, exact = result.reward.values, result.v, result.model.exact
    gaps = []
    for a, b in zip(v, phi):
        if values_equal(a, b, exact):
            continue
        gaps.append((a - b) / a if kind is EpsilonKind.MULTIPLICATIVE else a - b)
    one = result.model.one()
    return min(gaps + [one]) if gaps else one


def hitting_rule(model: Model, region, start=None) -> StoppingRule:
    """First entry into ``region`` at or after ``start`` (capped at the horizon)."""
    region = set(region)
    return _rule(model, start, region.__contains__)


def first_compensator_increase(model: Model, doob: DoobDecomposition, start=None) -> StoppingRule:
    """Stop at the last node before A increases (A is predictable: children share it)."""
    A = doob.A
    exact = model.exact

    def increases(i):
        kids = model.nodes[i].children
        return bool(kids) and A[kids[0][0]] > A[i] and not values_equal(A[kids[0][0]], A[i], exact)

    return _rule(model, start, increases)


def value_at_start(model: Model, result: SnellResult, start=None):
    """E[v(S)]."""
    s = StoppingRule.at_root(model) if start is None else start
    return expectation_under_rule(model, s, result.v)


def evaluate(model: Model, rule: StoppingRule, reward, result: SnellResult,
             start=None) -> StoppingReport:
    rule = require_valid(model, rule)
    value = expectation_under_rule(model, rule, reward, start)
    gap = value_at_start(model, result, start) - value
    return StoppingReport(rule, value, gap, time_distribution(model, rule, start))


def continuation_nodes(model: Model, rule: StoppingRule, start=None) -> set:
    """Nodes visited with ``start <= t < theta`` on some path."""
    rule = require_valid(model, rule)
    start = StoppingRule.at_root(model) if start is None else require_valid(model, start, "start")
    waiting = [False] * len(model)
    armed = [False] * len(model)
    waiting[model.root] = True
    out = set()
    for ids in model.levels:
        for i in ids:
            if waiting[i] and start.stop[i]:
                armed[i] = True
            live = armed[i] and not rule.stop[i]
            if live:
                out.add(i)
            for c, _ in model.nodes[i].children:
                if live:
                    armed[c] = True
                if waiting[i] and not start.stop[i]:
                    waiting[c] = True
    return out


def martingale_interval_check(model: Model, result: SnellResult, start, rule) -> CheckReport:
    """v must equal its continuation wherever the rule keeps going."""
    bad = sorted(i for i in continuation_nodes(model, rule, start)
                 if not values_equal(result.v[i], result.continuation[i], model.exact))
    return CheckReport("martingale on [S, theta)", bad)


def restrict_window(model: Model, rule: StoppingRule, S: StoppingRule, S_prime: StoppingRule,
                    strict: bool = False) -> StoppingRule:
    """Clamp the first STOP of ``rule`` after S into [S, S'] (or ]S, S'] when ``strict``).

    If no STOP of ``rule`` falls in the window the clamped time is S'. In the
    strict variant the earliest admissible time is S + 1 (or T when S = T).
    """
    model.require_tree("restrict_window")
    s_lv, sp_lv = stopping_levels(model, S), stopping_levels(model, S_prime)
    if any(a > b for a, b in zip(s_lv, sp_lv)):
        raise WindowOrderViolation("S must not exceed S' on any path")
    rule = require_valid(model, rule)
    after_s = reached(model, S)
    after_sp = reached(model, S_prime)
    parent = [p[0] if p else None for p in model.parents()]
    n = model.n_steps
    stops = []
    for nd in model.nodes:
        i = nd.id
        if strict:
            # S reached strictly before this node
            ok = parent[i] is not None and after_s[parent[i]]
        else:
            ok = after_s[i]
        stops.append(nd.level == n or (ok and (rule.stop[i] or after_sp[i])))
    return StoppingRule(tuple(stops))



def pathwise_leq(model: Model, a: StoppingRule, b: StoppingRule, start=None) -> bool:
    return all(x <= y for x, y in zip(stopping_levels(model, a, start),
                                       stopping_levels(model, b, start)))


def same_stopping_time(model: Model, a: StoppingRule, b: StoppingRule, start=None) -> bool:
    """Rules are identified when they induce the same time on every path."""
    return stopping_levels(model, a, start) == stopping_levels(model, b, start)
