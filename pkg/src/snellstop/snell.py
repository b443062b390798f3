"""Snell envelope by backward induction, and checks of its characterisation.

Recursion: ``v_N = phi_N`` and ``v_t = max(phi_t, E[v_{t+1} | F_t])``. The
strictly-later value ``vplus`` is the continuation ``E[v_{t+1} | F_t]`` off the
horizon and ``phi`` on it, so ``v = max(phi, vplus)`` holds at every node.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import ModelRewardMismatch
from .model import Model, values_equal
from .reward import RewardFamily


@dataclass(frozen=True)
class SnellResult:
    model: Model = field(repr=False)
    reward: RewardFamily = field(repr=False)
    v: tuple
    vplus: tuple

    @property
    def continuation(self) -> tuple:
        # same storage as vplus; only meaningful off the terminal level
        return self.vplus

    @property
    def value(self):
        return self.v[self.model.root]


@dataclass(frozen=True)
class DoobDecomposition:
    """``v = M - A`` with ``A`` predictable, nondecreasing and ``A(root) = 0``."""

    M: tuple
    A: tuple


@dataclass
class CheckReport:
    name: str
    violations: list
    detail: str = ""

    @property
    def passed(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.passed

    def line(self) -> str:
        verdict = "PASS" if self.passed else f"FAIL at {self.violations[:8]}"
        return f"{self.name}: {verdict}" + (f" ({self.detail})" if self.detail else "")


def _check_reward(model: Model, reward):
    if len(reward) != len(model):
        raise ModelRewardMismatch(f"reward has {len(reward)} values, model has {len(model)} nodes")


def compute(model: Model, reward: RewardFamily) -> SnellResult:
    _check_reward(model, reward)
    phi = reward.values
    v = [None] * len(model)
    vplus = [None] * len(model)
    for i in model.levels[-1]:
        v[i] = vplus[i] = phi[i]
    for t in range(model.n_steps - 1, -1, -1):
        for i in model.levels[t]:
            cont = sum((p * v[c] for c, p in model.nodes[i].children), 0)
            vplus[i] = cont
            v[i] = phi[i] if phi[i] >= cont else cont
    return SnellResult(model, reward, tuple(v), tuple(vplus))


def _lt(a, b, exact):
    return a < b and not values_equal(a, b, exact)


def check_supermartingale(model: Model, h) -> CheckReport:
    bad = []
    for nd in model.nodes:
        if nd.children:
            cont = sum((p * h[c] for c, p in nd.children), 0)
            if _lt(h[nd.id], cont, model.exact):
                bad.append(nd.id)
    return CheckReport("supermartingale", bad)


def check_dominance(h, reward, exact: bool = True) -> CheckReport:
    bad = [i for i, (a, b) in enumerate(zip(h, reward)) if _lt(a, b, exact)]
    return CheckReport("dominance", bad)


def check_smallest(model: Model, u, reward, result: SnellResult) -> CheckReport:
    """If ``u`` is a supermartingale dominating phi, list nodes where ``u < v``."""
    if not check_supermartingale(model, u) or not check_dominance(u, reward, model.exact):
        return CheckReport("smallest", [], "u is not a dominating supermartingale; nothing to assert")
    bad = [i for i, (a, b) in enumerate(zip(u, result.v)) if _lt(a, b, model.exact)]
    return CheckReport("smallest", bad)


def random_dominating_supermartingale(model: Model, reward, rng: random.Random,
                                      max_bump=4, denominator=10) -> list:
    """``u_N = phi_N + xi_N``, ``u_t = max(phi_t, E[u_{t+1}|F_t]) + xi_t`` with xi >= 0.

    The bumps xi are random nonnegative multiples of ``1/denominator``
    (zero with probability 1/2, so equality cases show up too).
    """
    def bump():
        if rng.random() < 0.5:
            return model.zero()
        k = rng.randint(1, max_bump * denominator)
        return model.one() * k / denominator

    phi = reward.values
    u = [None] * len(model)
    for i in model.levels[-1]:
        u[i] = phi[i] + bump()
    for t in range(model.n_steps - 1, -1, -1):
        for i in model.levels[t]:
            cont = sum((p * u[c] for c, p in model.nodes[i].children), 0)
            u[i] = max(phi[i], cont) + bump()
    return u


def vplus_identity_check(result: SnellResult, reward=None) -> CheckReport:
    """v = max(phi, vplus) everywhere, and v = phi = vplus on the horizon."""
    model = result.model
    phi = (reward or result.reward).values
    bad = []
    for nd in model.nodes:
        i = nd.id
        if not values_equal(result.v[i], max(phi[i], result.vplus[i]), model.exact):
            bad.append(i)
        elif not nd.children and not (values_equal(result.v[i], phi[i], model.exact)
                                      and values_equal(result.vplus[i], phi[i], model.exact)):
            bad.append(i)
    return CheckReport("v = max(phi, vplus)", bad)


def doob_decompose(model: Model, result: SnellResult) -> DoobDecomposition:
    """Split v into martingale minus compensator along the tree.

    ``A(c) = A(n) + v(n) - continuation(n)`` for each child c of n. A depends
    on the whole path, so this needs an EXACT_TREE.
    """
    model.require_tree("doob_decompose")
    A = [None] * len(model)
    M = [None] * len(model)
    A[model.root] = model.zero()
    for ids in model.levels:
        for i in ids:
            M[i] = result.v[i] + A[i]
            nd = model.nodes[i]
            if nd.children:
                inc = result.v[i] - result.continuation[i]
                for c, _ in nd.children:
                    A[c] = A[i] + inc
    return DoobDecomposition(tuple(M), tuple(A))


def check_doob(model: Model, result: SnellResult, doob: DoobDecomposition) -> list:
    """All Doob invariants as separate reports."""
    exact = model.exact
    A, M = doob.A, doob.M
    root = [] if values_equal(A[model.root], 0, exact) else [model.root]
    nondecreasing, siblings, martingale, identity = [], [], [], []
    for nd in model.nodes:
        i = nd.id
        if not values_equal(result.v[i], M[i] - A[i], exact):
            identity.append(i)
        if not nd.children:
            continue
        kids = [c for c, _ in nd.children]
        if any(_lt(A[c], A[i], exact) for c in kids):
            nondecreasing.append(i)
        if any(not values_equal(A[c], A[kids[0]], exact) for c in kids):
            siblings.append(i)
        if not values_equal(M[i], sum((p * M[c] for c, p in nd.children), 0), exact):
            martingale.append(i)
    return [
        CheckReport("A(root) = 0", root),
        CheckReport("A nondecreasing", nondecreasing),
        CheckReport("siblings share A", siblings),
        CheckReport("M martingale", martingale),
        CheckReport("v = M - A", identity),
    ]


def strict_supermartingale_region(result: SnellResult, reward=None) -> set:
    """Non-terminal nodes where v strictly exceeds its continuation."""
    model = result.model
    return {nd.id for nd in model.nodes
            if nd.children and result.v[nd.id] > result.continuation[nd.id]
            and not values_equal(result.v[nd.id], result.continuation[nd.id], model.exact)}


def vplus_equal_region(result: SnellResult) -> set:
    """Nodes with v = vplus (inspection only)."""
    exact = result.model.exact
    return {i for i, (a, b) in enumerate(zip(result.v, result.vplus)) if values_equal(a, b, exact)}


def vplus_gap_region(result: SnellResult) -> set:
    """Nodes with v > vplus, i.e. where stopping is strictly better than waiting."""
    return set(range(len(result.v))) - vplus_equal_region(result)


def envelope_fixed_point(result: SnellResult) -> CheckReport:
    """v = max(phi, E[v_{t+1}|F_t]) at non-terminal nodes, v = phi at the horizon."""
    model = result.model
    phi = result.reward.values
    bad = []
    for nd in model.nodes:
        i = nd.id
        if nd.children:
            cont = sum((p * result.v[c] for c, p in nd.children), 0)
            target = max(phi[i], cont)
        else:
            target = phi[i]
        if not values_equal(result.v[i], target, model.exact):
            bad.append(i)
    return CheckReport("envelope fixed point", bad)
