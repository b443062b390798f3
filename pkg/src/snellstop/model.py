"""Finite filtered probability spaces in discrete time.

A :class:`Model` is a layered graph of nodes. On an ``EXACT_TREE`` every node
has a single parent, so a node *is* an atom of the filtration at its level
(it encodes the whole history). On a ``MARKOV_LATTICE`` states recombine and a
node only carries ``(level, state)``.

Node ids are integers ``0..len(model)-1`` assigned level by level; the
original labels (from a spec file or the builder) live in ``Node.label``.
Adapted families are plain sequences indexed by node id.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterator, Mapping, Sequence

from .errors import (
    InvalidRule,
    LevelOutOfRange,
    MalformedSpec,
    OrphanNode,
    ParameterOutOfRange,
    ProbabilitySumViolation,
    UnsupportedModelKind,
)

PROB_SUM_TOL = 1e-12
EQ_RTOL = 1e-9


class ModelKind(enum.Enum):
    EXACT_TREE = "exact_tree"
    MARKOV_LATTICE = "markov_lattice"


class Arithmetic(enum.Enum):
    RATIONAL = "rational"
    FLOAT = "float"


class Decision(enum.Enum):
    STOP = "STOP"
    CONTINUE = "CONTINUE"


def to_number(x: Any, arithmetic: Arithmetic):
    """Convert ``x`` (int, float, Fraction or a "p/q"/decimal string)."""
    if arithmetic is Arithmetic.RATIONAL:
        if isinstance(x, Fraction):
            return x
        if isinstance(x, float):
            # decimal reading: 0.6 means 3/5, not the nearest binary double
            return Fraction(repr(x))
        if isinstance(x, str):
            return Fraction(x.strip())
        return Fraction(x)
    if isinstance(x, str):
        return float(Fraction(x.strip()))
    return float(x)


def values_equal(a, b, exact: bool) -> bool:
    if exact:
        return a == b
    if a == b:
        return True
    return abs(a - b) <= EQ_RTOL * max(abs(a), abs(b))


@dataclass(frozen=True)
class TimeGrid:
    times: tuple

    def __post_init__(self):
        times = tuple(self.times)
        object.__setattr__(self, "times", times)
        if len(times) < 2:
            raise ParameterOutOfRange("time grid needs at least one step")
        if times[0] != 0:
            raise ParameterOutOfRange("time grid must start at 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ParameterOutOfRange("time grid must be strictly increasing")

    @classmethod
    def uniform(cls, n_steps: int, horizon=1) -> "TimeGrid":
        if n_steps < 1:
            raise ParameterOutOfRange(f"n_steps must be >= 1, got {n_steps}")
        if horizon <= 0:
            raise ParameterOutOfRange(f"horizon must be > 0, got {horizon}")
        if isinstance(horizon, (int, Fraction)):
            return cls(tuple(Fraction(horizon) * k / n_steps for k in range(n_steps + 1)))
        return cls(tuple(horizon * k / n_steps for k in range(n_steps + 1)))

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def horizon(self):
        return self.times[-1]


@dataclass(frozen=True)
class Node:
    id: int
    level: int
    state: Any
    children: tuple  # ((child_id, prob), ...)
    label: str = ""


@dataclass(frozen=True)
class StoppingRule:
    """Per-node stop decisions; ``stop[i]`` is True where the rule says STOP.

    The induced stopping time on a path is the level of its first STOP node.
    """

    stop: tuple

    def __post_init__(self):
        object.__setattr__(self, "stop", tuple(bool(s) for s in self.stop))

    def __len__(self):
        return len(self.stop)

    def decision(self, node_id: int) -> Decision:
        return Decision.STOP if self.stop[node_id] else Decision.CONTINUE

    @classmethod
    def from_nodes(cls, model: "Model", nodes) -> "StoppingRule":
        """STOP on ``nodes`` and on the horizon, CONTINUE elsewhere."""
        nodes = set(nodes)
        n = model.n_steps
        return cls(tuple(i in nodes or nd.level == n for i, nd in enumerate(model.nodes)))

    @classmethod
    def at_level(cls, model: "Model", level: int) -> "StoppingRule":
        if not 0 <= level <= model.n_steps:
            raise LevelOutOfRange(f"level {level} outside [0, {model.n_steps}]")
        return cls(tuple(nd.level >= level for nd in model.nodes))

    @classmethod
    def at_root(cls, model: "Model") -> "StoppingRule":
        return cls.at_level(model, 0)

    @classmethod
    def at_horizon(cls, model: "Model") -> "StoppingRule":
        return cls.at_level(model, model.n_steps)


@dataclass(frozen=True)
class Model:
    grid: TimeGrid
    kind: ModelKind
    arithmetic: Arithmetic
    nodes: tuple
    levels: tuple  # level -> tuple of node ids

    def __len__(self):
        return len(self.nodes)

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def exact(self) -> bool:
        return self.arithmetic is Arithmetic.RATIONAL

    @property
    def is_tree(self) -> bool:
        return self.kind is ModelKind.EXACT_TREE

    @property
    def root(self) -> int:
        return self.levels[0][0]

    @property
    def interior(self) -> tuple:
        return tuple(i for t in range(self.n_steps) for i in self.levels[t])

    def parents(self) -> list:
        out = [[] for _ in self.nodes]
        for nd in self.nodes:
            for c, _ in nd.children:
                out[c].append(nd.id)
        return out

    def require_tree(self, what: str = "this operation"):
        if not self.is_tree:
            raise UnsupportedModelKind(f"{what} requires an EXACT_TREE model")

    def paths(self) -> list:
        """Root-to-leaf node-id tuples in depth-first order (trees only)."""
        self.require_tree("path enumeration")
        return [p for p, _ in path_measure(self)]

    def zero(self):
        return Fraction(0) if self.exact else 0.0

    def one(self):
        return Fraction(1) if self.exact else 1.0


def _validate_children(nd: Node, exact: bool, n_steps: int):
    if nd.level == n_steps:
        if nd.children:
            raise MalformedSpec(f"terminal node {nd.label or nd.id} has children")
        return
    if not nd.children:
        raise MalformedSpec(f"non-terminal node {nd.label or nd.id} has no children")
    probs = [p for _, p in nd.children]
    if any(p <= 0 for p in probs):
        raise ProbabilitySumViolation(f"node {nd.label or nd.id}: non-positive child probability")
    total = sum(probs)
    ok = total == 1 if exact else abs(total - 1.0) <= PROB_SUM_TOL
    if not ok:
        raise ProbabilitySumViolation(
            f"node {nd.label or nd.id}: child probabilities sum to {total}, not 1")


def _assemble(grid, kind, arithmetic, raw_nodes) -> Model:
    """raw_nodes: list of (label, level, state, [(child_index, prob)]) in level order."""
    n_steps = grid.n_steps
    nodes = tuple(Node(i, lvl, st, tuple(ch), lab)
                  for i, (lab, lvl, st, ch) in enumerate(raw_nodes))
    levels = [[] for _ in range(n_steps + 1)]
    for nd in nodes:
        levels[nd.level].append(nd.id)
    model = Model(grid, kind, arithmetic, nodes, tuple(tuple(l) for l in levels))
    _validate_structure(model)
    return model


def _validate_structure(model: Model):
    exact = model.exact
    if len(model.levels[0]) != 1:
        raise MalformedSpec(f"expected exactly one root, found {len(model.levels[0])}")
    for t, ids in enumerate(model.levels):
        if not ids:
            raise MalformedSpec(f"level {t} has no nodes")
    parents = model.parents()
    for nd in model.nodes:
        _validate_children(nd, exact, model.n_steps)
        for c, _ in nd.children:
            if model.nodes[c].level != nd.level + 1:
                raise MalformedSpec(f"edge {nd.label} -> {model.nodes[c].label} skips a level")
        if nd.level > 0:
            if not parents[nd.id]:
                raise OrphanNode(f"node {nd.label or nd.id} at level {nd.level} has no parent")
            if model.is_tree and len(parents[nd.id]) > 1:
                raise MalformedSpec(f"node {nd.label or nd.id} has several parents in an EXACT_TREE")


def _parse_enum(enum_cls, value):
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(str(value).lower())
    except ValueError:
        raise MalformedSpec(f"unknown {enum_cls.__name__}: {value!r}") from None


def build_binomial(s0, up, down, p, n_steps: int, horizon=1,
                   kind=ModelKind.EXACT_TREE, arithmetic=Arithmetic.RATIONAL) -> Model:
    """Binomial model: each step multiplies the state by ``up`` (prob ``p``) or ``down``.

    With ``p`` equal to 0 or 1 only the reachable child is kept.
    """
    kind = _parse_enum(ModelKind, kind)
    arithmetic = _parse_enum(Arithmetic, arithmetic)
    s0, up, down, p, horizon = (to_number(x, arithmetic) for x in (s0, up, down, p, horizon))
    if not s0 > 0:
        raise ParameterOutOfRange(f"s0 must be > 0, got {s0}")
    if not up > 1:
        raise ParameterOutOfRange(f"up must be > 1, got {up}")
    if not 0 < down < 1:
        raise ParameterOutOfRange(f"down must lie in (0, 1), got {down}")
    if not 0 <= p <= 1:
        raise ParameterOutOfRange(f"p must lie in [0, 1], got {p}")
    if not isinstance(n_steps, int) or n_steps < 1:
        raise ParameterOutOfRange(f"n_steps must be an integer >= 1, got {n_steps}")

    def state(n_up, n_down):
        return s0 * up ** n_up * down ** n_down

    return _binomial(state, p, n_steps, TimeGrid.uniform(n_steps, horizon), kind, arithmetic)


def build_crr(s0, volatility, rate, horizon, n_steps: int, kind=ModelKind.MARKOV_LATTICE,
              dividend=0.0) -> Model:
    """Cox-Ross-Rubinstein lattice in float arithmetic.

    States are ``s0 * exp(sigma*sqrt(dt)*(n_up - n_down))`` so that nodes with
    as many up as down moves carry exactly ``s0``.
    """
    kind = _parse_enum(ModelKind, kind)
    if s0 <= 0 or volatility <= 0 or horizon <= 0 or n_steps < 1:
        raise ParameterOutOfRange("need s0 > 0, volatility > 0, horizon > 0, n_steps >= 1")
    dt = horizon / n_steps
    step = volatility * math.sqrt(dt)
    up, down = math.exp(step), math.exp(-step)
    p = (math.exp((rate - dividend) * dt) - down) / (up - down)
    if not 0 < p < 1:
        raise ParameterOutOfRange(f"CRR probability {p} outside (0, 1); refine the grid")

    def state(n_up, n_down):
        return s0 * math.exp(step * (n_up - n_down))

    return _binomial(state, p, n_steps, TimeGrid.uniform(n_steps, float(horizon)), kind,
                     Arithmetic.FLOAT)


def _binomial(state, p, n_steps, grid, kind, arithmetic) -> Model:
    moves = [(1, p), (0, 1 - p)]
    moves = [(u, q) for u, q in moves if q > 0]
    raw = []
    if kind is ModelKind.EXACT_TREE:
        # (label, level, n_up) per level, up child first
        frontier = [("r", 0)]
        index = {}
        next_levels = []
        for t in range(n_steps + 1):
            for lab, n_up in frontier:
                index[lab] = len(raw)
                raw.append([lab, t, state(n_up, t - n_up), []])
            if t == n_steps:
                break
            nxt = []
            for lab, n_up in frontier:
                for u, q in moves:
                    child = ("" if lab == "r" else lab) + ("u" if u else "d")
                    nxt.append((child, n_up + u))
                    next_levels.append((lab, child, q))
            frontier = nxt
        for lab, child, q in next_levels:
            raw[index[lab]][3].append((index[child], q))
    else:
        offsets = []
        for t in range(n_steps + 1):
            offsets.append(len(raw))
            for j in range(t + 1):  # j = number of down moves
                raw.append([f"{t}:{j}", t, state(t - j, j), []])
        for t in range(n_steps):
            for j in range(t + 1):
                node = raw[offsets[t] + j]
                for u, q in moves:
                    node[3].append((offsets[t + 1] + j + (1 - u), q))
        # with p in {0, 1} some lattice nodes are unreachable; drop them
        if len(moves) == 1:
            raw = _prune_unreachable(raw)
    return _assemble(grid, kind, arithmetic, [tuple(r) for r in raw])


def _prune_unreachable(raw):
    reach = {0}
    for i, r in enumerate(raw):
        if i in reach:
            reach.update(c for c, _ in r[3])
    keep = [i for i in range(len(raw)) if i in reach]
    new_id = {old: new for new, old in enumerate(keep)}
    return [[raw[i][0], raw[i][1], raw[i][2], [(new_id[c], q) for c, q in raw[i][3]]]
            for i in keep]


def build_from_spec(spec: Mapping) -> Model:
    """Build a model from a parsed model-spec mapping.

    Expected keys: ``arithmetic`` ("rational" | "float"), optional ``kind``,
    ``grid`` {n_steps, horizon, optional times}, ``nodes`` [{id, level, state}],
    ``edges`` [{from, to, prob}]. Numbers may be given as "p/q" strings.
    """
    if not isinstance(spec, Mapping):
        raise MalformedSpec("model spec must be a mapping")
    try:
        arithmetic = _parse_enum(Arithmetic, spec.get("arithmetic", "rational"))
        kind = _parse_enum(ModelKind, spec.get("kind", "exact_tree"))
        grid_spec = spec["grid"]
        nodes = spec["nodes"]
        edges = spec.get("edges", [])
        n_steps = int(grid_spec["n_steps"])
        if "times" in grid_spec:
            grid = TimeGrid(tuple(to_number(x, arithmetic) for x in grid_spec["times"]))
        else:
            grid = TimeGrid.uniform(n_steps, to_number(grid_spec.get("horizon", 1), arithmetic))
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, MalformedSpec):
            raise
        raise MalformedSpec(f"bad model spec: {exc!r}") from None
    except ParameterOutOfRange as exc:
        raise MalformedSpec(str(exc)) from None
    if not nodes:
        raise MalformedSpec("model spec lists no nodes")
    if grid.n_steps != n_steps:
        raise MalformedSpec("grid.times length does not match grid.n_steps")

    try:
        entries = [(str(nd["id"]), int(nd["level"]), to_number(nd.get("state", 0), arithmetic))
                   for nd in nodes]
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise MalformedSpec(f"bad node entry: {exc!r}") from None
    labels = [e[0] for e in entries]
    if len(set(labels)) != len(labels):
        raise MalformedSpec("duplicate node ids")
    if any(not 0 <= lvl <= n_steps for _, lvl, _ in entries):
        raise MalformedSpec(f"node level outside [0, {n_steps}]")
    # stable sort by level keeps the listed order inside each level
    order = sorted(range(len(entries)), key=lambda i: entries[i][1])
    new_id = {labels[i]: k for k, i in enumerate(order)}
    children = [[] for _ in entries]
    for e in edges:
        try:
            a, b = new_id[str(e["from"])], new_id[str(e["to"])]
            children[a].append((b, to_number(e["prob"], arithmetic)))
        except KeyError as exc:
            raise MalformedSpec(f"edge refers to unknown node {exc}") from None
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise MalformedSpec(f"bad edge probability: {exc!r}") from None
    raw = [(labels[i], entries[i][1], entries[i][2], children[k]) for k, i in enumerate(order)]
    return _assemble(grid, kind, arithmetic, raw)


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    return repr(x)


def model_to_spec(model: Model) -> dict:
    """Inverse of :func:`build_from_spec` (numbers rendered as strings)."""
    return {
        "arithmetic": model.arithmetic.value,
        "kind": model.kind.value,
        "grid": {"n_steps": model.n_steps, "horizon": _fmt(model.grid.horizon),
                 "times": [_fmt(t) for t in model.grid.times]},
        "nodes": [{"id": nd.label, "level": nd.level, "state": _fmt(nd.state)}
                  for nd in model.nodes],
        "edges": [{"from": nd.label, "to": model.nodes[c].label, "prob": _fmt(p)}
                  for nd in model.nodes for c, p in nd.children],
    }


def load_model_spec(path) -> Model:
    from .io import read_structured

    return build_from_spec(read_structured(path))


def _expect(node: Node, h):
    return sum((p * h[c] for c, p in node.children), 0)


def conditional_expectation(model: Model, h: Sequence, level: int) -> list:
    """One-step conditional expectation E[h_{t+1} | F_t] on the level-t nodes."""
    if not 0 <= level < model.n_steps:
        raise LevelOutOfRange(f"level {level} outside [0, {model.n_steps - 1}]")
    return [_expect(model.nodes[i], h) for i in model.levels[level]]


def one_step_expectation(model: Model, h: Sequence) -> list:
    """E[h_{t+1} | F_t] at every non-terminal node; terminal entries are None."""
    return [_expect(nd, h) if nd.children else None for nd in model.nodes]


def expectation(model: Model, h: Sequence, level: int):
    """Unconditional expectation of h restricted to ``level``."""
    mass = level_mass(model)
    return sum((mass[i] * h[i] for i in model.levels[level]), 0)


def level_mass(model: Model) -> list:
    """Probability of reaching each node."""
    mass = [model.zero() for _ in model.nodes]
    mass[model.root] = model.one()
    for ids in model.levels:
        for i in ids:
            for c, p in model.nodes[i].children:
                mass[c] += mass[i] * p
    return mass


def path_measure(model: Model) -> Iterator[tuple]:
    """Yield ``(path, probability)`` for every root-to-leaf path of a tree."""
    if not model.is_tree:
        raise UnsupportedModelKind("path_measure requires an EXACT_TREE model")
    stack = [((model.root,), model.one())]
    while stack:
        path, prob = stack.pop()
        nd = model.nodes[path[-1]]
        if not nd.children:
            yield path, prob
            continue
        for c, p in reversed(nd.children):
            stack.append((path + (c,), prob * p))


@dataclass
class RuleCheck:
    valid: bool
    diagnostics: list

    def __bool__(self):
        return self.valid


def _decisions(model: Model, rule) -> tuple:
    """Normalise a StoppingRule or node->decision mapping; returns (stops, diagnostics)."""
    diags = []
    if isinstance(rule, StoppingRule):
        stops = list(rule.stop)
        if len(stops) != len(model):
            diags.append(f"rule covers {len(stops)} nodes, model has {len(model)}")
            stops = (stops + [None] * len(model))[:len(model)]
    else:
        by_label = {nd.label: nd.id for nd in model.nodes}
        stops = [None] * len(model)
        for key, dec in dict(rule).items():
            i = key if isinstance(key, int) else by_label.get(key)
            if i is None or not 0 <= i < len(model):
                diags.append(f"unknown node {key!r}")
                continue
            if isinstance(dec, Decision):
                stops[i] = dec is Decision.STOP
            elif isinstance(dec, str):
                stops[i] = dec.upper() == "STOP"
            else:
                stops[i] = bool(dec)
    for nd in model.nodes:
        if stops[nd.id] is None:
            diags.append(f"node {nd.label or nd.id} has no decision")
        elif nd.level == model.n_steps and not stops[nd.id]:
            diags.append(f"terminal node {nd.label or nd.id} marked CONTINUE")
    return stops, diags


def is_valid_rule(model: Model, rule) -> RuleCheck:
    _, diags = _decisions(model, rule)
    return RuleCheck(not diags, diags)


def require_valid(model: Model, rule, name: str = "rule") -> StoppingRule:
    stops, diags = _decisions(model, rule)
    if diags:
        raise InvalidRule(f"{name} invalid: " + "; ".join(diags[:5]))
    return rule if isinstance(rule, StoppingRule) else StoppingRule(tuple(stops))


def stopping_mass(model: Model, rule: StoppingRule, start: StoppingRule | None = None) -> list:
    """Probability that the rule, armed from ``start``, stops at each node.

    The induced time is the first STOP of ``rule`` at or after ``start`` on the
    path. Works on lattices too since both rules are node-based.
    """
    rule = require_valid(model, rule)
    start = StoppingRule.at_root(model) if start is None else require_valid(model, start, "start")
    zero = model.zero()
    waiting = [zero] * len(model)  # start not yet reached
    armed = [zero] * len(model)
    stopped = [zero] * len(model)
    waiting[model.root] = model.one()
    for ids in model.levels:
        for i in ids:
            w = waiting[i]
            if start.stop[i]:
                armed[i] += w
                w = zero
            a = armed[i]
            if rule.stop[i]:
                stopped[i] = a
                a = zero
            for c, p in model.nodes[i].children:
                if a:
                    armed[c] += a * p
                if w:
                    waiting[c] += w * p
    return stopped


def expectation_under_rule(model: Model, rule: StoppingRule, reward,
                           start: StoppingRule | None = None):
    """E[phi(theta)] where theta is the first STOP of ``rule`` at or after ``start``."""
    values = getattr(reward, "values", reward)
    mass = stopping_mass(model, rule, start)
    return sum((m * values[i] for i, m in enumerate(mass) if m), 0)


def time_distribution(model: Model, rule: StoppingRule, start: StoppingRule | None = None) -> dict:
    mass = stopping_mass(model, rule, start)
    dist = {t: model.zero() for t in range(model.n_steps + 1)}
    for i, m in enumerate(mass):
        dist[model.nodes[i].level] += m
    return dist


def reached(model: Model, start: StoppingRule | None) -> list:
    """Per node: has ``start`` already stopped at this node or an ancestor?

    Node-measurable only on trees, or for the trivial start at the root.
    """
    if start is None:
        return [True] * len(model)
    start = require_valid(model, start, "start")
    if start.stop[model.root]:
        return [True] * len(model)
    model.require_tree("a non-trivial start rule")
    out = [False] * len(model)
    for ids in model.levels:
        for i in ids:
            out[i] = out[i] or start.stop[i]
            for c, _ in model.nodes[i].children:
                out[c] = out[i]
    return out


def stopping_levels(model: Model, rule: StoppingRule, start: StoppingRule | None = None) -> list:
    """Induced stopping level on every path of a tree, in :meth:`Model.paths` order."""
    model.require_tree("pathwise stopping times")
    rule = require_valid(model, rule)
    armed_at = reached(model, start)
    out = []
    for path in model.paths():
        out.append(next(model.nodes[i].level for i in path if armed_at[i] and rule.stop[i]))
    return out
