import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aclearn.bn import BayesianNetwork, Split
from aclearn.synth import random_tree_network
from aclearn.treewidth import elimination_width, estimate_treewidth_minfill, min_fill_order, moralize


def exact_treewidth(adj):
    n = len(adj)
    if n == 0:
        return 0
    return min(elimination_width(adj, order) for order in itertools.permutations(range(n)))


def test_moralize_marries_parents():
    adj = moralize([set(), set(), {0, 1}])
    assert adj == [{1, 2}, {0, 2}, {0, 1}]


def test_empty_network():
    bn = BayesianNetwork.empty((2, 2, 2))
    assert estimate_treewidth_minfill(bn) == (0, [0, 1, 2])


def test_chain_and_cycle():
    chain = [set()] + [{i - 1} for i in range(1, 6)]
    assert min_fill_order(moralize(chain))[0] == 1
    cycle = [{1, 5}, {0, 2}, {1, 3}, {2, 4}, {3, 5}, {4, 0}]
    assert min_fill_order(cycle)[0] == 2


def test_ties_broken_by_lowest_index():
    # every node of a star has zero fill once two leaves are gone
    star = [{1, 2, 3}, {0}, {0}, {0}]
    assert min_fill_order(star) == (1, [1, 2, 0, 3])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 7))
def test_upper_bound_and_replay(seed, n):
    rng = np.random.default_rng(seed)
    bn = random_tree_network((2,) * n, rng)
    adj = moralize(bn.parents)
    width, order = estimate_treewidth_minfill(bn)
    assert sorted(order) == list(range(n))
    assert elimination_width(adj, order) == width
    assert width >= exact_treewidth(adj)


def test_replay_rejects_bad_order():
    with pytest.raises(ValueError):
        elimination_width([set(), set()], [0, 0])


def test_split_adds_moral_edges():
    bn = BayesianNetwork.empty((2, 2, 2))
    leaves = bn.apply_split(Split(2, 0))
    bn.apply_split(Split(leaves[0].id, 1))
    assert estimate_treewidth_minfill(bn)[0] == 2
