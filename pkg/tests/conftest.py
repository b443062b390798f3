from fractions import Fraction as F

import pytest

from snellstop import build_binomial, reward, snell

ACCEPTANCE_LINES = []


@pytest.fixture
def tree():
    """Two-step tree 4 -> (8, 2) -> (16, 4, 4, 1), p = 1/2, exact arithmetic."""
    return build_binomial(4, 2, F(1, 2), F(1, 2), 2)


@pytest.fixture
def put_phi(tree):
    return reward.put(tree, 5)


@pytest.fixture
def put_result(tree, put_phi):
    return snell.compute(tree, put_phi)


def node(model, label):
    return next(nd.id for nd in model.nodes if nd.label == label)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
