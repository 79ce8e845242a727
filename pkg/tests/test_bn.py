import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aclearn.bn import BayesianNetwork, Split, count_log_likelihood, estimate_leaf_distribution
from aclearn.data import dataset_from_rows
from aclearn.errors import DataError, InvalidSplitError
from aclearn.synth import random_tree_network, sample

from conftest import all_assignments


def test_laplace_and_ml_estimates():
    assert estimate_leaf_distribution([3, 1]) == pytest.approx([4 / 6, 2 / 6])
    assert estimate_leaf_distribution([3, 1], method="ml") == pytest.approx([0.75, 0.25])
    assert estimate_leaf_distribution([0, 0, 0]) == pytest.approx([1 / 3] * 3)


def test_count_log_likelihood():
    assert count_log_likelihood([3, 1], [0.75, 0.25]) == pytest.approx(3 * math.log(0.75) + math.log(0.25))


def test_chain_joint(chain_bn):
    assert chain_bn.joint_probability((1, 1)) == pytest.approx(0.54)
    assert chain_bn.joint_probability((0, 1)) == pytest.approx(0.08)
    assert sum(chain_bn.joint_probability(x) for x in all_assignments((2, 2))) == pytest.approx(1.0)


def test_empty_network_uses_laplace_marginals():
    data = dataset_from_rows([[0, 1], [1, 1], [1, 0]], (2, 2))
    bn = BayesianNetwork.empty((2, 2), data)
    assert bn.trees[0].root.theta == pytest.approx([2 / 5, 3 / 5])
    assert bn.joint_probability((1, 1)) == pytest.approx(3 / 5 * 3 / 5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6))
def test_random_networks_normalize(seed, n):
    rng = np.random.default_rng(seed)
    arities = tuple(int(a) for a in rng.integers(2, 4, size=n))
    bn = random_tree_network(arities, rng)
    total = sum(bn.joint_probability(x) for x in all_assignments(arities))
    assert total == pytest.approx(1.0, abs=1e-12)
    assert bn.is_acyclic()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_gain_equals_likelihood_difference(seed):
    rng = np.random.default_rng(seed)
    truth = random_tree_network((2, 3, 2, 2), rng)
    data = sample(truth, 300, rng)
    bn = BayesianNetwork.empty(data.arities, data)
    for _ in range(4):
        options = [Split(l, v) for l in sorted(bn.leaves) for v in bn.valid_split_vars(l)]
        split = options[rng.integers(len(options))]
        before = bn.log_likelihood(data)
        gain = bn.likelihood_gain(split, data)
        bn.apply_split(split, data)
        assert bn.log_likelihood(data) - before == pytest.approx(gain, abs=1e-9)
        assert bn.log_likelihood(data) == pytest.approx(bn.training_log_likelihood(), abs=1e-9)


def test_split_validity_blocks_cycles_and_repeats():
    bn = BayesianNetwork.empty((2, 2, 2))
    a, b = bn.apply_split(Split(1, 0))       # 0 -> 1
    assert not bn.is_valid_split(Split(0, 1))
    assert not bn.is_valid_split(Split(a.id, 0))  # already on the path
    assert not bn.is_valid_split(Split(a.id, 1))  # own variable
    bn.apply_split(Split(2, 1))               # 1 -> 2
    assert not bn.is_valid_split(Split(0, 2))  # would close 0 -> 1 -> 2 -> 0
    assert bn.descendants[0, 2]
    with pytest.raises(InvalidSplitError):
        bn.apply_split(Split(0, 2))
    with pytest.raises(InvalidSplitError):
        bn.is_valid_split(Split(999, 0))


def test_descendants_match_recomputation():
    rng = np.random.default_rng(5)
    bn = BayesianNetwork.empty((2,) * 6)
    for _ in range(25):
        options = [Split(l, v) for l in sorted(bn.leaves) for v in bn.valid_split_vars(l)]
        if not options:
            break
        bn.apply_split(options[rng.integers(len(options))])
        incremental = bn.descendants.copy()
        bn._rebuild_descendants()
        assert (incremental == bn.descendants).all()
        assert bn.is_acyclic()


def test_log_likelihood_rows_match_joint():
    rng = np.random.default_rng(1)
    bn = random_tree_network((2, 3, 2, 2, 3), rng)
    data = sample(bn, 50, rng)
    per_row = bn.log_likelihood_rows(data.values)
    for row, ll in zip(data.values, per_row):
        assert ll == pytest.approx(math.log(bn.joint_probability(tuple(row))), abs=1e-12)


def test_text_round_trip():
    rng = np.random.default_rng(2)
    bn = random_tree_network((2, 3, 2, 2), rng)
    text = bn.dumps()
    again = BayesianNetwork.loads(text)
    assert again.dumps() == text
    assert again.parents == bn.parents
    for x in all_assignments(bn.arities):
        assert again.joint_probability(x) == bn.joint_probability(x)


def test_loads_rejects_garbage():
    with pytest.raises(DataError):
        BayesianNetwork.loads("bn 2 laplace 2\narities 2 2\nvar 0\n")
    with pytest.raises(DataError):
        BayesianNetwork.loads("hello")


def test_unknown_estimator():
    with pytest.raises(DataError):
        BayesianNetwork((2, 2), estimator="bayes")
