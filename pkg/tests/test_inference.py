import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aclearn.circuit import Evidence
from aclearn.data import dataset_from_rows
from aclearn.errors import DataError, ImpossibleEvidenceError
from aclearn.inference import (Query, evaluate_queryset, generate_queries, markov_blanket_conditional,
                               query_conditional, read_queries, write_queries)
from aclearn.learner import LearnerConfig, learn
from aclearn.synth import random_tree_network, sample

from conftest import all_assignments, enumerate_conditional


@pytest.fixture(scope="module")
def learned():
    rng = np.random.default_rng(11)
    data = sample(random_tree_network((2, 3, 2, 2, 2, 3), rng), 600, rng)
    res = learn(data, LearnerConfig(k_e=0.01, max_splits=20))
    return res.bn, res.circuit, data


def test_chain_marginal(chain_pair):
    bn, circ = chain_pair
    assert math.exp(query_conditional(circ, Query(((1, 1),)))) == pytest.approx(0.62)
    # P(X=1 | Y=1) = 0.54 / 0.62
    assert math.exp(query_conditional(circ, Query(((0, 1),), ((1, 1),)))) == pytest.approx(0.54 / 0.62)


def test_full_assignment_is_log_joint(learned):
    bn, circ, data = learned
    for row in data.values[:20]:
        q = Query(tuple(enumerate(int(x) for x in row)))
        assert query_conditional(circ, q) == pytest.approx(math.log(bn.joint_probability(tuple(row))), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_matches_enumeration_and_chain_rule(learned, data):
    bn, circ, _ = learned
    n = bn.n_vars
    perm = data.draw(st.permutations(range(n)))
    k_a = data.draw(st.integers(1, 2))
    k_b = data.draw(st.integers(1, 2))
    k_e = data.draw(st.integers(0, n - k_a - k_b))
    vals = [data.draw(st.integers(0, bn.arities[v] - 1)) for v in range(n)]
    pick = lambda vs: tuple((v, vals[v]) for v in vs)
    a, b, e = pick(perm[:k_a]), pick(perm[k_a:k_a + k_b]), pick(perm[k_a + k_b:k_a + k_b + k_e])
    ab_e = query_conditional(circ, Query(a + b, e))
    assert ab_e == pytest.approx(enumerate_conditional(bn, a + b, e), abs=1e-9)
    a_be = query_conditional(circ, Query(a, b + e))
    b_e = query_conditional(circ, Query(b, e))
    assert ab_e == pytest.approx(a_be + b_e, abs=1e-9)
    # exp(log P(Q|E)) * P(E) = P(Q, E)
    joint = circ.evaluate(dict(a + b + e))
    assert math.exp(ab_e) * circ.evaluate(dict(e)) == pytest.approx(joint, rel=1e-10, abs=1e-300)


def test_visit_count_is_linear(learned):
    bn, circ, _ = learned
    counter = {}
    query_conditional(circ, Query(((0, 1),), ((2, 0),)), counter)
    assert counter["visits"] <= 2 * circ.node_count


def test_impossible_evidence(chain_pair):
    from aclearn.circuit import ArithmeticCircuit
    circ = ArithmeticCircuit((2, 2))
    p = circ.add_parameter(0, 0, 0, 1.0)
    q0, q1 = circ.add_parameter(1, 1, 0, 0.5), circ.add_parameter(1, 1, 1, 0.5)
    x = circ.add_sum([circ.add_product([circ.indicator(0, 0), p])])
    y = circ.add_sum([circ.add_product([circ.indicator(1, 0), q0]), circ.add_product([circ.indicator(1, 1), q1])])
    circ.set_root(circ.add_product([x, y]))
    with pytest.raises(ImpossibleEvidenceError):
        query_conditional(circ, Query(((1, 0),), ((0, 1),)))
    report = evaluate_queryset(circ, [Query(((1, 0),), ((0, 1),)), Query(((1, 0),), ((0, 0),))])
    assert report.impossible == 1 and report.answered == 1
    assert report.mean_per_var == pytest.approx(math.log(0.5))


def test_query_validation():
    with pytest.raises(DataError):
        Query(((0, 1),), ((0, 0),))
    with pytest.raises(DataError):
        Query(((0, 1), (0, 0)))
    with pytest.raises(DataError):
        Query(((5, 0),)).check((2, 2))


def test_query_text_round_trip(tmp_path):
    qs = [Query(((3, 1), (0, 0)), ((2, 1),)), Query(((1, 0),))]
    assert qs[0].format() == "q 0=0 3=1 | e 2=1"
    assert Query.parse("q 1=0") == Query.parse("q 1=0 | e") == qs[1]
    path = tmp_path / "q.txt"
    write_queries(qs, path)
    assert read_queries(path) == qs
    path.write_text("q 1=0\nx 2=1\n")
    with pytest.raises(DataError, match=":2:"):
        read_queries(path)


def test_metric_is_per_query_variable():
    report = evaluate_queryset(lambda q: -1.0, [Query(((0, 0), (1, 1)))])
    assert report.mean_per_var == pytest.approx(-0.5)
    assert report.results[0].micros >= 0
    with pytest.raises(DataError):
        evaluate_queryset(lambda q: 0.0, [])


def test_exact_metric_matches_enumeration(learned):
    bn, circ, data = learned
    queries = generate_queries(data, 0.3, 0.3, seed=2, max_rows=25)
    report = evaluate_queryset(circ, queries)
    expect = np.mean([enumerate_conditional(bn, q.query, q.evidence) / len(q.query) for q in queries])
    assert report.mean_per_var == pytest.approx(expect, abs=1e-9)


def test_generate_queries_sizes_and_determinism():
    rng = np.random.default_rng(0)
    data = dataset_from_rows(rng.integers(0, 2, size=(30, 10)).tolist(), (2,) * 10)
    qs = generate_queries(data, 0.3, 0.0, seed=1)
    assert len(qs) == 30
    assert all(len(q.query) == 3 and not q.evidence for q in qs)
    both = generate_queries(data, 0.3, 0.5, seed=1)
    for q, row in zip(both, data.values):
        assert len(q.query) == 3 and len(q.evidence) == 5
        assert not {v for v, _ in q.query} & {v for v, _ in q.evidence}
        assert all(row[v] == x for v, x in q.query + q.evidence)
    assert generate_queries(data, 0.3, 0.5, seed=1) == both
    assert generate_queries(data, 0.3, 0.5, seed=2) != both
    with pytest.raises(DataError):
        generate_queries(data, 0.6, 0.5, seed=1)


def test_blanket_conditional_matches_joint():
    rng = np.random.default_rng(3)
    bn = random_tree_network((2, 3, 2, 2, 3, 2, 2), rng)
    for x in list(all_assignments(bn.arities))[::17]:
        x = list(x)
        for var in range(bn.n_vars):
            got = markov_blanket_conditional(bn, var, x)
            joint = []
            for v in range(bn.arities[var]):
                y = list(x)
                y[var] = v
                joint.append(bn.joint_probability(y))
            assert got == pytest.approx(np.array(joint) / sum(joint), abs=1e-12)
            assert got.sum() == pytest.approx(1.0, abs=1e-12)


def test_blanket_of_childless_variable_is_its_cpd_row(chain_bn):
    got = markov_blanket_conditional(chain_bn, 1, [1, 0])
    assert got == pytest.approx([0.1, 0.9])


def test_evidence_object_accepted(chain_pair):
    bn, circ = chain_pair
    ev = Evidence.from_assignment(circ.arities, {0: 1})
    assert circ.evaluate(ev) == pytest.approx(0.6)
