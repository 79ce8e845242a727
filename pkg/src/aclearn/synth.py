"""Random tree-CPD networks and ancestral sampling, for tests and demos."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .bn import BayesianNetwork, Split, TreeSplit
from .data import Dataset


def random_tree_network(arities: Sequence[int], rng: np.random.Generator, max_parents: int = 3,
                        split_prob: float = 0.7, max_depth: int = 3,
                        concentration: float = 0.6) -> BayesianNetwork:
    """Network whose trees split only on lower-indexed variables.

    Leaf distributions are drawn from a symmetric Dirichlet; small
    ``concentration`` gives near-deterministic, strongly dependent CPDs.
    """
    bn = BayesianNetwork.empty(arities)
    n = len(arities)
    for var in range(1, n):
        pool = list(rng.permutation(var)[:max_parents])
        frontier = [(bn.trees[var].root.id, 0)]
        while frontier:
            leaf_id, depth = frontier.pop()
            leaf = bn.leaves[leaf_id]
            options = [p for p in pool if p not in leaf.path_vars()]
            if not options or depth >= max_depth or rng.random() > split_prob:
                continue
            p = int(options[rng.integers(len(options))])
            for child in bn.apply_split(Split(leaf_id, p)):
                frontier.append((child.id, depth + 1))
    for leaf in bn.leaves.values():
        theta = rng.dirichlet(np.full(bn.arities[leaf.var], concentration))
        theta = np.clip(theta, 1e-3, None)
        theta /= theta.sum()
        bn.set_theta(leaf.id, theta)
    return bn


def topological_order(bn: BayesianNetwork) -> list[int]:
    order, done = [], set()
    remaining = list(range(bn.n_vars))
    while remaining:
        nxt = [v for v in remaining if bn.parents[v] <= done]
        order.extend(nxt)
        done.update(nxt)
        remaining = [v for v in remaining if v not in done]
    return order


def sample(bn: BayesianNetwork, n_rows: int, rng: np.random.Generator) -> Dataset:
    values = np.zeros((n_rows, bn.n_vars), dtype=np.int64)
    for var in topological_order(bn):
        stack = [(bn.trees[var].root, np.arange(n_rows))]
        while stack:
            node, rows = stack.pop()
            if isinstance(node, TreeSplit):
                col = values[rows, node.var]
                stack.extend((child, rows[col == i]) for i, child in enumerate(node.children))
                continue
            cdf = np.cumsum(node.theta)
            u = rng.random(rows.shape[0])
            values[rows, var] = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
    return Dataset(values, bn.arities)


def independent_data(arities: Sequence[int], n_rows: int, rng: np.random.Generator) -> Dataset:
    """Columns drawn independently from random marginals."""
    cols = []
    for a in arities:
        p = rng.dirichlet(np.ones(a))
        cols.append(rng.choice(a, size=n_rows, p=p))
    return Dataset(np.stack(cols, axis=1), tuple(arities))
