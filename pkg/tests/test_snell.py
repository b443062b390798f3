import random
from fractions import Fraction as F

import pytest

from snellstop import build_binomial, oracle, reward, snell
from snellstop.errors import ModelRewardMismatch, UnsupportedModelKind
from snellstop.model import build_crr

from conftest import node


def strictly_later_by_enumeration(model, phi):
    """sup of E[phi(theta)] over rules that continue at the root."""
    return max(oracle.rule_value(model, r, phi) for r in oracle.enumerate_rules(model)
               if not r.stop[model.root])


def test_put_oracle_values(tree, put_phi):
    # frozen from exhaustive enumeration over all 2^3 rules
    assert oracle.brute_force(tree, put_phi).max_value == F(7, 4)


def test_put_envelope(tree, put_phi, put_result):
    v = put_result.v
    assert [v[i] for i in tree.levels[2]] == [0, 1, 1, 4]
    assert v[node(tree, "u")] == F(1, 2)
    assert v[node(tree, "d")] == 3
    assert put_result.value == F(7, 4)
    assert put_result.vplus[node(tree, "d")] == F(5, 2)


def test_constant_envelope(tree):
    res = snell.compute(tree, reward.constant(tree, F(5, 3)))
    assert set(res.v) == {F(5, 3)} and set(res.vplus) == {F(5, 3)}


def test_digital_usc_envelope(tree):
    phi = reward.digital_usc(tree, 4)
    res = snell.compute(tree, phi)
    assert oracle.brute_force(tree, phi).max_value == 1
    assert strictly_later_by_enumeration(tree, phi) == F(3, 4)
    assert res.value == 1 and res.vplus[tree.root] == F(3, 4)


def test_vplus_root_matches_enumeration(tree, put_phi, put_result):
    assert put_result.vplus[tree.root] == strictly_later_by_enumeration(tree, put_phi)


def test_mismatched_reward(tree):
    with pytest.raises(ModelRewardMismatch):
        snell.compute(tree, reward.RewardFamily((1, 2)))


def test_supermartingale_checks(tree, put_phi, put_result):
    assert snell.check_supermartingale(tree, put_result.v)
    rep = snell.check_supermartingale(tree, put_phi.values)
    assert node(tree, "u") in rep.violations
    martingale = [F(7, 4), F(1, 2), 3, 0, 1, 1, 5]
    assert snell.check_supermartingale(tree, martingale)


def test_dominance(tree, put_phi, put_result):
    assert snell.check_dominance(put_result.v, put_phi)
    assert snell.check_dominance(put_phi.values, put_phi)
    rep = snell.check_dominance([0] * len(tree), put_phi)
    assert set(rep.violations) == {i for i in range(len(tree)) if put_phi[i] > 0}


def test_check_smallest(tree, put_phi, put_result):
    assert snell.check_smallest(tree, put_result.v, put_phi, put_result)
    shifted = [x + 1 for x in put_result.v]
    assert snell.check_smallest(tree, shifted, put_phi, put_result)
    assert all(a > b for a, b in zip(shifted, put_result.v))
    rng = random.Random(3)
    for _ in range(20):
        u = snell.random_dominating_supermartingale(tree, put_phi, rng)
        assert snell.check_supermartingale(tree, u) and snell.check_dominance(u, put_phi)
        assert all(a >= b for a, b in zip(u, put_result.v))


def test_vplus_identity(tree, put_phi, put_result):
    assert snell.vplus_identity_check(put_result, put_phi)
    up = node(tree, "u")
    assert max(put_phi[up], put_result.vplus[up]) == put_result.v[up] == F(1, 2)
    for i in tree.levels[-1]:
        assert put_result.v[i] == put_phi[i] == put_result.vplus[i]


def test_vplus_identity_detects_corruption(tree, put_phi, put_result):
    v = list(put_result.v)
    v[node(tree, "u")] += 1
    bad = snell.SnellResult(tree, put_phi, tuple(v), put_result.vplus)
    assert node(tree, "u") in snell.vplus_identity_check(bad).violations


def test_doob_put_example(tree, put_result):
    doob = snell.doob_decompose(tree, put_result)
    for lab in ("dd", "du"):
        assert doob.A[node(tree, lab)] == F(1, 2)
    for lab in ("r", "u", "d", "uu", "ud"):
        assert doob.A[node(tree, lab)] == 0
    assert all(snell.check_doob(tree, put_result, doob))


def test_doob_constant(tree):
    res = snell.compute(tree, reward.constant(tree, 2))
    doob = snell.doob_decompose(tree, res)
    assert set(doob.A) == {0} and set(doob.M) == {2}


def test_doob_needs_tree():
    m = build_binomial(4, 2, F(1, 2), F(1, 2), 2, kind="markov_lattice")
    res = snell.compute(m, reward.put(m, 5))
    with pytest.raises(UnsupportedModelKind):
        snell.doob_decompose(m, res)


def test_strict_region(tree, put_phi, put_result):
    assert snell.strict_supermartingale_region(put_result) == {node(tree, "d")}
    assert snell.strict_supermartingale_region(snell.compute(tree, reward.constant(tree, 1))) == set()
    usc = snell.compute(tree, reward.digital_usc(tree, 4))
    assert snell.strict_supermartingale_region(usc) == {tree.root}


def test_vplus_regions(tree, put_result):
    eq, gap = snell.vplus_equal_region(put_result), snell.vplus_gap_region(put_result)
    assert gap == {node(tree, "d")}
    assert eq | gap == set(range(len(tree)))


def test_lattice_matches_tree_for_markov_reward():
    tree = build_binomial(4, 2, F(1, 2), F(1, 3), 5)
    lattice = build_binomial(4, 2, F(1, 2), F(1, 3), 5, kind="markov_lattice")
    vt = snell.compute(tree, reward.put(tree, 5)).value
    vl = snell.compute(lattice, reward.put(lattice, 5)).value
    assert vt == vl


def test_float_lattice_identity():
    m = build_crr(36.0, 0.2, 0.06, 1.0, 200)
    res = snell.compute(m, reward.put(m, 40.0, rate=0.06))
    assert snell.vplus_identity_check(res)
    assert snell.envelope_fixed_point(res)
    # discounted American put, S0=36 K=40 r=6% sigma=20% T=1: about 4.48
    assert res.value == pytest.approx(4.48, abs=0.02)
