from fractions import Fraction as F

import pytest

from snellstop import (
    Arithmetic,
    Decision,
    ModelKind,
    StoppingRule,
    TimeGrid,
    build_binomial,
    build_from_spec,
    conditional_expectation,
    expectation_under_rule,
    is_valid_rule,
    path_measure,
    reward,
)
from snellstop.errors import (
    InvalidRule,
    LevelOutOfRange,
    MalformedSpec,
    OrphanNode,
    ParameterOutOfRange,
    ProbabilitySumViolation,
    UnsupportedModelKind,
)
from snellstop.model import build_crr, level_mass, model_to_spec, stopping_levels, time_distribution

from conftest import node


def test_binomial_tree_shape(tree):
    assert len(tree) == 7
    assert [len(l) for l in tree.levels] == [1, 2, 4]
    assert sorted(tree.nodes[i].state for i in tree.levels[2]) == [1, 4, 4, 16]
    for nd in tree.nodes:
        for c, _ in nd.children:
            assert tree.nodes[c].state in (nd.state * 2, nd.state / 2)


def test_binomial_degenerate_p_one():
    m = build_binomial(4, 2, F(1, 2), 1, 1)
    assert len(m) == 2
    assert m.nodes[m.root].children == ((1, 1),)


def test_binomial_lattice_recombines():
    m = build_binomial(4, 2, F(1, 2), F(1, 2), 2, kind=ModelKind.MARKOV_LATTICE)
    assert len(m) == 6
    assert sorted(m.nodes[i].state for i in m.levels[2]) == [1, 4, 16]
    assert len(m.parents()[m.levels[2][1]]) == 2


@pytest.mark.parametrize("kwargs", [
    dict(s0=0), dict(up=1), dict(down=1), dict(down=0), dict(p=F(3, 2)), dict(n_steps=0),
])
def test_binomial_rejects_bad_parameters(kwargs):
    params = dict(s0=4, up=2, down=F(1, 2), p=F(1, 2), n_steps=2)
    params.update(kwargs)
    with pytest.raises(ParameterOutOfRange):
        build_binomial(**params)


def test_tree_exact_tree_sizes():
    for n in range(1, 6):
        m = build_binomial(1, 2, F(1, 2), F(1, 3), n)
        assert [len(l) for l in m.levels] == [2 ** t for t in range(n + 1)]


def test_crr_lattice_has_exact_spot_nodes():
    m = build_crr(100.0, 0.2, 0.0, 1.0, 10)
    for t in range(0, 11, 2):
        assert any(m.nodes[i].state == 100.0 for i in m.levels[t])
    for t in range(1, 11, 2):
        assert all(m.nodes[i].state != 100.0 for i in m.levels[t])


def test_time_grid_invariants():
    g = TimeGrid.uniform(4, 2)
    assert g.times[0] == 0 and g.horizon == 2 and g.n_steps == 4
    with pytest.raises(ParameterOutOfRange):
        TimeGrid((0, 1, 1))
    with pytest.raises(ParameterOutOfRange):
        TimeGrid((F(1, 2), 1))


def test_spec_round_trip(tree):
    assert build_from_spec(model_to_spec(tree)) == tree


def test_spec_parses_rationals_and_decimals():
    spec = {
        "arithmetic": "rational",
        "grid": {"n_steps": 1, "horizon": 1},
        "nodes": [{"id": "a", "level": 0, "state": 1}, {"id": "b", "level": 1, "state": "3/2"},
                  {"id": "c", "level": 1, "state": 0.5}],
        "edges": [{"from": "a", "to": "b", "prob": "0.6"}, {"from": "a", "to": "c", "prob": "2/5"}],
    }
    m = build_from_spec(spec)
    assert m.nodes[0].children == ((1, F(3, 5)), (2, F(2, 5)))
    assert m.nodes[2].state == F(1, 2)


def _two_child_spec(p1, p2):
    return {
        "grid": {"n_steps": 1, "horizon": 1},
        "nodes": [{"id": "r", "level": 0, "state": 1}, {"id": "u", "level": 1, "state": 2},
                  {"id": "d", "level": 1, "state": 0}],
        "edges": [{"from": "r", "to": "u", "prob": p1}, {"from": "r", "to": "d", "prob": p2}],
    }


def test_spec_probability_sum_violation():
    with pytest.raises(ProbabilitySumViolation):
        build_from_spec(_two_child_spec("0.6", "0.5"))


def test_spec_empty_nodes():
    with pytest.raises(MalformedSpec):
        build_from_spec({"grid": {"n_steps": 1}, "nodes": [], "edges": []})


def test_spec_orphan_node():
    spec = _two_child_spec("1/2", "1/2")
    spec["nodes"].append({"id": "x", "level": 1, "state": 5})
    with pytest.raises(OrphanNode):
        build_from_spec(spec)


def test_spec_tree_rejects_shared_child():
    spec = {
        "grid": {"n_steps": 2},
        "nodes": [{"id": "r", "level": 0}, {"id": "u", "level": 1}, {"id": "d", "level": 1},
                  {"id": "m", "level": 2}],
        "edges": [{"from": "r", "to": "u", "prob": "1/2"}, {"from": "r", "to": "d", "prob": "1/2"},
                  {"from": "u", "to": "m", "prob": 1}, {"from": "d", "to": "m", "prob": 1}],
    }
    with pytest.raises(MalformedSpec):
        build_from_spec(spec)
    spec["kind"] = "markov_lattice"
    assert build_from_spec(spec).kind is ModelKind.MARKOV_LATTICE


def test_float_mode_probability_tolerance():
    spec = _two_child_spec(0.1 + 0.2, 0.7)
    spec["arithmetic"] = "float"
    m = build_from_spec(spec)
    assert m.arithmetic is Arithmetic.FLOAT


def test_conditional_expectation_examples():
    m = build_binomial(1, 2, F(1, 2), F(1, 2), 1)
    assert conditional_expectation(m, [0, 0, 1], 0) == [F(1, 2)]
    assert conditional_expectation(m, [0, 3, F(5, 2)], 0) == [F(11, 4)]
    det = build_binomial(1, 2, F(1, 2), 1, 1)
    assert conditional_expectation(det, [0, F(7, 3)], 0) == [F(7, 3)]
    with pytest.raises(LevelOutOfRange):
        conditional_expectation(m, [0, 0, 1], 1)


def test_conditional_expectation_hand_sum(tree):
    h = [F(k, 7) for k in range(len(tree))]
    got = conditional_expectation(tree, h, 1)
    for value, i in zip(got, tree.levels[1]):
        assert value == sum(p * h[c] for c, p in tree.nodes[i].children)


def test_path_measure(tree):
    paths = list(path_measure(tree))
    assert len(paths) == 4
    assert all(p == F(1, 4) for _, p in paths)
    assert sum(p for _, p in paths) == 1
    det = build_binomial(1, 2, F(1, 2), 1, 1)
    assert [p for _, p in path_measure(det)] == [1]
    lattice = build_binomial(1, 2, F(1, 2), F(1, 2), 2, kind="markov_lattice")
    with pytest.raises(UnsupportedModelKind):
        list(path_measure(lattice))


def test_expectation_under_rule_basics(tree, put_phi, put_result):
    ones = reward.constant(tree, 1)
    for rule in (StoppingRule.at_root(tree), StoppingRule.at_horizon(tree)):
        assert expectation_under_rule(tree, rule, ones) == 1
    assert expectation_under_rule(tree, StoppingRule.at_root(tree), put_phi) == put_phi[tree.root]
    theta = StoppingRule.from_nodes(tree, [node(tree, "d")])
    assert expectation_under_rule(tree, theta, put_phi) == F(7, 4)


def test_expectation_matches_path_sum(tree, put_phi):
    rule = StoppingRule.from_nodes(tree, [node(tree, "u")])
    start = StoppingRule.at_level(tree, 1)
    by_paths = 0
    levels = stopping_levels(tree, rule, start)
    for (path, prob), lvl in zip(path_measure(tree), levels):
        by_paths += prob * put_phi[path[lvl]]
    assert expectation_under_rule(tree, rule, put_phi, start) == by_paths


def test_expectation_rejects_invalid_rule(tree, put_phi):
    with pytest.raises(InvalidRule):
        expectation_under_rule(tree, StoppingRule((False,) * len(tree)), put_phi)


def test_is_valid_rule(tree):
    assert is_valid_rule(tree, StoppingRule((True,) * 7))
    bad = {nd.label: Decision.STOP for nd in tree.nodes}
    bad["uu"] = Decision.CONTINUE
    check = is_valid_rule(tree, bad)
    assert not check and "uu" in check.diagnostics[0]
    missing = {nd.label: "STOP" for nd in tree.nodes if nd.label != "d"}
    check = is_valid_rule(tree, missing)
    assert not check and any("d" in d for d in check.diagnostics)


def test_time_distribution_sums_to_one(tree):
    rule = StoppingRule.from_nodes(tree, [node(tree, "d")])
    dist = time_distribution(tree, rule)
    assert dist == {0: 0, 1: F(1, 2), 2: F(1, 2)}


def test_level_mass_on_lattice():
    m = build_binomial(1, 2, F(1, 2), F(1, 3), 3, kind="markov_lattice")
    mass = level_mass(m)
    for ids in m.levels:
        assert sum(mass[i] for i in ids) == 1
