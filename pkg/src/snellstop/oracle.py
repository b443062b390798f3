"""Exhaustive stopping-rule oracle for small exact trees.

Every map interior-node -> {STOP, CONTINUE} is encoded as a bitmask and
evaluated as a plain path sum ``sum_paths P(path) * phi(node at theta)``. All
weights are brought to a common denominator so the whole enumeration runs in
exact integer arithmetic, vectorised over blocks of masks. Nothing here uses
the backward recursion, so agreement with :mod:`snellstop.snell` is a real
cross-check.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

from .errors import FloatModeRejected, ModelTooLarge
from .model import Model, ModelKind, StoppingRule, TimeGrid, _assemble, Arithmetic, path_measure
from .reward import RewardFamily

MAX_INTERIOR = 24
BLOCK = 1 << 18
CORPUS_SEED = 20090417


def _interior(model: Model) -> tuple:
    model.require_tree("the stopping-rule oracle")
    interior = model.interior
    if len(interior) > MAX_INTERIOR:
        raise ModelTooLarge(f"{len(interior)} interior nodes exceeds the cap of {MAX_INTERIOR}")
    return interior


def _mask_to_rule(model: Model, interior, mask: int) -> StoppingRule:
    stop = [True] * len(model)
    for bit, i in enumerate(interior):
        stop[i] = bool(mask >> bit & 1)
    return StoppingRule(tuple(stop))


def enumerate_rules(model: Model) -> Iterator[StoppingRule]:
    interior = _interior(model)
    for mask in range(1 << len(interior)):
        yield _mask_to_rule(model, interior, mask)


@dataclass
class _PathTable:
    bits: np.ndarray      # (n_paths, N) bit index of the interior node at each level
    weights: np.ndarray   # (n_paths, N+1) integer P(path)*phi(node_t) * denominator
    denominator: int


def _path_table(model: Model, reward) -> _PathTable:
    interior = _interior(model)
    bit_of = {i: b for b, i in enumerate(interior)}
    phi = reward.values
    paths = list(path_measure(model))
    n = model.n_steps
    w = [[prob * phi[i] for i in path] for path, prob in paths]
    den = 1
    for row in w:
        for x in row:
            den = math.lcm(den, Fraction(x).denominator)
    ints = [[int(Fraction(x) * den) for x in row] for row in w]
    biggest = max((abs(x) for row in ints for x in row), default=0)
    dtype = np.int64 if biggest * len(paths) < 2 ** 62 else object
    bits = np.array([[bit_of[i] for i in path[:n]] for path, _ in paths], dtype=np.int64)
    return _PathTable(bits, np.array(ints, dtype=dtype), den)


def _block_eval(table: _PathTable, masks: np.ndarray, want_times=False):
    n_paths, n = table.bits.shape
    total = np.zeros(len(masks), dtype=table.weights.dtype)
    times = np.empty((len(masks), n_paths), dtype=np.int64) if want_times else None
    for k in range(n_paths):
        stopped = np.zeros(len(masks), dtype=bool)
        when = np.full(len(masks), n, dtype=np.int64)
        for t in range(n):
            hit = ((masks >> table.bits[k, t]) & 1).astype(bool) & ~stopped
            when[hit] = t
            stopped |= hit
        total += table.weights[k][when]
        if want_times:
            times[:, k] = when
    return total, times


@dataclass
class OracleResult:
    max_value: Fraction
    masks: np.ndarray = field(repr=False)
    rule_count: int
    interior: tuple = field(repr=False)
    model: Model = field(repr=False)
    stopping_levels: np.ndarray = field(repr=False)  # (n_optimal, n_paths)

    @property
    def optimal_rules(self) -> list:
        return [_mask_to_rule(self.model, self.interior, int(m)) for m in self.masks]

    @property
    def n_optimal(self) -> int:
        return len(self.masks)

    def distinct_stopping_times(self) -> np.ndarray:
        return np.unique(self.stopping_levels, axis=0)


def brute_force(model: Model, reward: RewardFamily) -> OracleResult:
    if not model.exact:
        raise FloatModeRejected("the oracle needs rational arithmetic")
    table = _path_table(model, reward)
    interior = _interior(model)
    count = 1 << len(interior)
    best = None
    winners = []
    for lo in range(0, count, BLOCK):
        masks = np.arange(lo, min(count, lo + BLOCK), dtype=np.int64)
        vals, _ = _block_eval(table, masks)
        top = vals.max()
        if best is None or top > best:
            best, winners = top, [masks[vals == top]]
        elif top == best:
            winners.append(masks[vals == top])
    masks = np.concatenate(winners)
    _, times = _block_eval(table, masks, want_times=True)
    return OracleResult(Fraction(int(best), table.denominator), masks, count, interior, model,
                        times)


def rule_value(model: Model, rule: StoppingRule, reward) -> Fraction:
    """Path-sum value of one rule (independent of the engine's forward pass)."""
    interior = _interior(model)
    mask = sum(1 << b for b, i in enumerate(interior) if rule.stop[i])
    table = _path_table(model, reward)
    vals, _ = _block_eval(table, np.array([mask], dtype=np.int64))
    return Fraction(int(vals[0]), table.denominator)


@dataclass
class TheoremReport:
    oracle_value: Fraction
    engine_value: Fraction
    n_optimal: int
    failures: list

    @property
    def passed(self) -> bool:
        return not self.failures

    def __bool__(self):
        return self.passed


def verify_theorems(model: Model, reward: RewardFamily) -> TheoremReport:
    """Oracle value = envelope value; theta_*, theta-check optimal; sandwich on every path."""
    from . import snell, stopping
    from .model import stopping_levels

    oracle = brute_force(model, reward)
    result = snell.compute(model, reward)
    lo = np.array(stopping_levels(model, stopping.minimal_optimal(result)))
    hi = np.array(stopping_levels(model, stopping.maximal_optimal(result)))
    failures = []
    if oracle.max_value != result.value:
        failures.append(f"value: oracle {oracle.max_value} != envelope {result.value}")
    times = oracle.stopping_levels
    for name, tau in (("minimal", lo), ("maximal", hi)):
        if not (times == tau).all(axis=1).any():
            failures.append(f"{name} optimal rule is not in the oracle's optimal set")
    below = np.argwhere(times < lo)
    above = np.argwhere(times > hi)
    paths = None
    for label, hits in (("theta_* <= tau", below), ("tau <= theta_check", above)):
        if len(hits):
            paths = paths or model.paths()
            r, p = hits[0]
            failures.append(f"{label} fails for optimal rule mask {int(oracle.masks[r])} "
                            f"on path {[model.nodes[i].label for i in paths[p]]}")
    return TheoremReport(oracle.max_value, result.value, oracle.n_optimal, failures)


def random_instance(rng: random.Random, depth: int | None = None):
    """Binary rational tree with p/q probabilities (q <= 10) and rewards p/q (q <= 10, p <= 20).

    Returns ``(model, reward)``. States are a +1/-1 walk and only label nodes;
    the reward is drawn per node, so it is path dependent in general.
    """
    depth = depth or rng.choice((2, 3, 4))
    raw = []
    for t in range(depth + 1):
        for k in range(2 ** t):
            moves = format(k, f"0{t}b") if t else ""
            label = "".join("d" if m == "1" else "u" for m in moves) or "r"
            state = Fraction(moves.count("0") - moves.count("1"))
            raw.append([label, t, state, []])
    for t in range(depth):
        for k in range(2 ** t):
            q = rng.randint(2, 10)
            p = Fraction(rng.randint(1, q - 1), q)
            first = 2 ** (t + 1) - 1 + 2 * k
            raw[2 ** t - 1 + k][3] = [(first, p), (first + 1, 1 - p)]
    grid = TimeGrid.uniform(depth, 1)
    model = _assemble(grid, ModelKind.EXACT_TREE, Arithmetic.RATIONAL, [tuple(r) for r in raw])
    values = tuple(Fraction(rng.randint(0, 20), rng.randint(1, 10)) for _ in raw)
    return model, RewardFamily(values, "random")


def corpus(n: int = 200, seed: int = CORPUS_SEED):
    """Fixed-seed list of ``(model, reward)`` random instances."""
    rng = random.Random(seed)
    return [random_instance(rng) for _ in range(n)]
