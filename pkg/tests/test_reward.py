from fractions import Fraction as F

import numpy as np
import pytest

from snellstop import StoppingRule, build_binomial, reward
from snellstop.errors import NegativeReward, NonMonotoneSequence, UnsupportedModelKind

from conftest import node


def by_level(model, family):
    return [[family[i] for i in ids] for ids in model.levels]


def test_put_values(tree, put_phi):
    assert by_level(tree, put_phi) == [[1], [0, 3], [0, 1, 1, 4]]


def test_from_function(tree):
    zero = reward.from_function(tree, lambda t, x: 0)
    assert set(zero) == {0}
    with pytest.raises(NegativeReward):
        reward.from_function(tree, lambda t, x: -1)


def test_digital_usc(tree):
    assert by_level(tree, reward.digital_usc(tree, 4)) == [[1], [1, 0], [1, 1, 1, 0]]
    assert set(reward.digital_usc(tree, 0)) == {1}
    assert set(reward.digital_usc(tree, 17)) == {0}


def test_digital_lsc(tree):
    assert by_level(tree, reward.digital_lsc(tree, 4)) == [[0], [1, 0], [1, 0, 0, 0]]
    assert set(reward.digital_lsc(tree, F(1, 2))) == {1}


@pytest.mark.parametrize("strike", [1, 2, 4, 8, 16, 3])
def test_digital_difference_is_indicator_of_strike(tree, strike):
    usc, lsc = reward.digital_usc(tree, strike), reward.digital_lsc(tree, strike)
    for nd in tree.nodes:
        assert usc[nd.id] - lsc[nd.id] == (1 if nd.state == strike else 0)
        assert lsc[nd.id] <= usc[nd.id]


def test_constant(tree):
    assert set(reward.constant(tree, 1)) == {1}
    assert set(reward.constant(tree, 0)) == {0}
    with pytest.raises(NegativeReward):
        reward.constant(tree, -1)


def test_lookback_max(tree):
    phi = reward.path_lookback_max(tree)
    assert phi[node(tree, "dd")] == 4
    assert phi[tree.root] == 4
    assert phi[node(tree, "uu")] == 16
    lattice = build_binomial(4, 2, F(1, 2), F(1, 2), 2, kind="markov_lattice")
    with pytest.raises(UnsupportedModelKind):
        reward.path_lookback_max(lattice)


def test_pointwise_max_commutes_with_from_function(tree):
    def f(t, x):
        return max(5 - x, 0)

    def g(t, x):
        return x / 4

    lhs = reward.from_function(tree, f).pointwise_max(reward.from_function(tree, g))
    rhs = reward.from_function(tree, lambda t, x: max(f(t, x), g(t, x)))
    assert lhs.values == rhs.values


def test_payoff_vectorises_like_scalar():
    xs = np.array([1.0, 4.0, 4.5, 16.0])
    for kind in ("put", "call", "digital_usc", "digital_lsc", "constant"):
        f = reward.Payoff(kind, 4.0)
        assert list(f(0, xs)) == [f(0, float(x)) for x in xs]


def test_float_digital_uses_literal_comparison():
    f = reward.Payoff("digital_usc", 0.3)
    assert f(0, 0.1 + 0.2) == 1.0  # 0.30000000000000004 >= 0.3
    assert reward.Payoff("digital_usc", 0.1 + 0.2)(0, 0.3) == 0.0


def _down_chain(n):
    """Deterministic path 2^n -> 2^(n-1) -> ... -> 1."""
    return build_binomial(2 ** n, 2, F(1, 2), 0, n)


def test_usc_diagnostic_constant(tree):
    phi = reward.constant(tree, 3)
    rules = [StoppingRule.at_level(tree, k) for k in range(3)]
    rep = reward.usc_in_expectation_diagnostic(tree, phi, rules, StoppingRule.at_horizon(tree))
    assert not rep.violation and set(rep.expectations) == {3}


def test_usc_diagnostic_tail_equality(tree, put_phi):
    limit = StoppingRule.at_level(tree, 1)
    rules = [StoppingRule.at_root(tree), limit, limit]
    rep = reward.usc_in_expectation_diagnostic(tree, put_phi, rules, limit)
    assert rep.tail_equal and not rep.violation
    assert "finite-sample" in rep.note


def test_usc_diagnostic_flags_lsc_digital():
    n = 6
    m = _down_chain(n)
    rules = [StoppingRule.at_level(m, k) for k in range(n)]
    limit = StoppingRule.at_horizon(m)
    lsc = reward.digital_lsc(m, 1)
    usc = reward.digital_usc(m, 1)
    # E[phi(theta_k)] by direct evaluation: states above 1 before the horizon
    rep = reward.usc_in_expectation_diagnostic(m, lsc, rules, limit)
    assert rep.expectations == [1] * n and rep.limit_value == 0 and rep.violation
    assert not reward.usc_in_expectation_diagnostic(m, usc, rules, limit).violation


def test_usc_diagnostic_refinement_family():
    # same horizon, finer and finer grids: the last pre-horizon stop keeps paying 1
    for n in (2, 4, 8):
        m = build_binomial(2, F(3, 2), F(1, 2), 0, n, horizon=1)
        strike = m.nodes[m.levels[-1][0]].state
        rules = [StoppingRule.at_level(m, n - 1)]
        rep = reward.usc_in_expectation_diagnostic(m, reward.digital_lsc(m, strike), rules,
                                                   StoppingRule.at_horizon(m))
        assert rep.violation


def test_usc_diagnostic_rejects_non_monotone(tree, put_phi):
    rules = [StoppingRule.at_level(tree, 1), StoppingRule.at_root(tree)]
    with pytest.raises(NonMonotoneSequence):
        reward.usc_in_expectation_diagnostic(tree, put_phi, rules, StoppingRule.at_horizon(tree))
