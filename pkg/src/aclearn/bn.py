"""Bayesian networks whose CPDs are decision trees over parent variables.

This is the statistical view of a learned circuit: it decides which splits
are valid, owns the leaf parameters and counts, and gives the likelihood.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .data import Dataset
from .errors import DataError, InvalidSplitError

ESTIMATORS = ("laplace", "ml")


def estimate_leaf_distribution(counts, arity: int | None = None, method: str = "laplace") -> np.ndarray:
    """Multinomial parameters from value counts.

    ``laplace`` adds one pseudo-count per value (posterior mean under a flat
    Dirichlet); ``ml`` is the plain relative frequency and may contain zeros.
    """
    counts = np.asarray(counts, dtype=float)
    if arity is None:
        arity = counts.shape[0]
    if arity < 2 or counts.shape[0] != arity:
        raise DataError("arity must be >= 2 and match the count vector")
    total = counts.sum()
    if method == "laplace":
        return (counts + 1.0) / (total + arity)
    if method == "ml":
        if total == 0:
            return np.full(arity, 1.0 / arity)
        return counts / total
    raise DataError(f"unknown estimator {method!r}")


def count_log_likelihood(counts, theta) -> float:
    """sum_v counts[v] * log(theta[v]), treating 0 * log 0 as 0."""
    counts = np.asarray(counts, dtype=float)
    theta = np.asarray(theta, dtype=float)
    nz = counts > 0
    if np.any(theta[nz] <= 0):
        return float("-inf")
    return float(np.dot(counts[nz], np.log(theta[nz])))


@dataclass(eq=False)
class Leaf:
    id: int
    var: int
    path: tuple[tuple[int, int], ...]
    counts: np.ndarray
    theta: np.ndarray
    rows: np.ndarray | None = field(default=None, repr=False)

    def path_vars(self) -> set[int]:
        return {v for v, _ in self.path}


@dataclass(eq=False)
class TreeSplit:
    var: int
    children: list


@dataclass(frozen=True)
class Split:
    """Split the leaf distribution ``leaf`` on the values of variable ``var``."""

    leaf: int
    var: int


class DecisionTreeCpd:
    def __init__(self, var: int, root):
        self.var = var
        self.root = root

    def leaf_for(self, assignment) -> Leaf:
        node = self.root
        while isinstance(node, TreeSplit):
            node = node.children[assignment[node.var]]
        return node

    def leaves(self) -> Iterator[Leaf]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, TreeSplit):
                stack.extend(reversed(node.children))
            else:
                yield node

    def split_vars(self) -> set[int]:
        out = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, TreeSplit):
                out.add(node.var)
                stack.extend(node.children)
        return out

    def replace_leaf(self, leaf: Leaf, node):
        if not leaf.path:
            self.root = node
            return
        parent = self.root
        for var, val in leaf.path[:-1]:
            parent = parent.children[val]
        var, val = leaf.path[-1]
        if parent.var != var or parent.children[val] is not leaf:
            raise InvalidSplitError(f"leaf {leaf.id} is not where its path says")
        parent.children[val] = node


class BayesianNetwork:
    """Variables, one decision-tree CPD each, and the induced parent DAG."""

    def __init__(self, arities: Sequence[int], estimator: str = "laplace"):
        if estimator not in ESTIMATORS:
            raise DataError(f"unknown estimator {estimator!r}")
        self.arities = tuple(int(a) for a in arities)
        self.estimator = estimator
        self.trees: list[DecisionTreeCpd] = []
        self.leaves: dict[int, Leaf] = {}
        self.parents: list[set[int]] = [set() for _ in self.arities]
        # descendants[a, b] is True when b is a (strict) descendant of a
        self.descendants = np.zeros((len(self.arities), len(self.arities)), dtype=bool)
        self.next_leaf_id = 0
        self.data: Dataset | None = None

    @property
    def n_vars(self) -> int:
        return len(self.arities)

    def _new_leaf(self, var, path, counts, rows=None, theta=None) -> Leaf:
        counts = np.asarray(counts, dtype=np.int64)
        if theta is None:
            theta = estimate_leaf_distribution(counts, self.arities[var], self.estimator)
        leaf = Leaf(self.next_leaf_id, var, tuple(path), counts, np.asarray(theta, dtype=float), rows)
        self.leaves[leaf.id] = leaf
        self.next_leaf_id += 1
        return leaf

    @classmethod
    def empty(cls, arities: Sequence[int], data: Dataset | None = None,
              estimator: str = "laplace") -> "BayesianNetwork":
        """Network with no arcs; leaf ids equal variable indices."""
        bn = cls(arities, estimator)
        if data is not None and tuple(data.arities) != bn.arities:
            raise DataError("dataset arities do not match the network")
        bn.data = data
        for var, arity in enumerate(bn.arities):
            if data is None:
                counts = np.zeros(arity, dtype=np.int64)
                rows = None
            else:
                counts = np.bincount(data.values[:, var], minlength=arity)
                rows = np.arange(data.n_rows)
            bn.trees.append(DecisionTreeCpd(var, bn._new_leaf(var, (), counts, rows)))
        return bn

    # -- structure ----------------------------------------------------

    def children_of(self, var: int) -> list[int]:
        return [c for c in range(self.n_vars) if var in self.parents[c]]

    def set_theta(self, leaf_id: int, theta):
        theta = np.asarray(theta, dtype=float)
        leaf = self.leaves[leaf_id]
        if theta.shape != (self.arities[leaf.var],) or np.any(theta <= 0) or abs(theta.sum() - 1) > 1e-12:
            raise DataError("theta must be a strictly positive probability vector")
        leaf.theta = theta

    def _leaf(self, leaf_id: int) -> Leaf:
        try:
            return self.leaves[leaf_id]
        except KeyError:
            raise InvalidSplitError(f"leaf {leaf_id} is not a live leaf") from None

    def is_valid_split(self, split: Split) -> bool:
        leaf = self._leaf(split.leaf)
        target, v = leaf.var, split.var
        if not 0 <= v < self.n_vars:
            raise InvalidSplitError(f"unknown variable {v}")
        if v == target or self.descendants[target, v]:
            return False
        return v not in leaf.path_vars()

    def valid_split_vars(self, leaf_id: int) -> list[int]:
        leaf = self._leaf(leaf_id)
        on_path = leaf.path_vars()
        desc = self.descendants[leaf.var]
        return [v for v in range(self.n_vars) if v != leaf.var and not desc[v] and v not in on_path]

    def _rows(self, leaf: Leaf, data: Dataset) -> np.ndarray:
        if leaf.rows is not None and data is self.data:
            return leaf.rows
        mask = np.ones(data.n_rows, dtype=bool)
        for var, val in leaf.path:
            mask &= data.values[:, var] == val
        return np.flatnonzero(mask)

    def child_counts(self, split: Split, data: Dataset) -> np.ndarray:
        """Counts of the target variable per value of the splitting variable."""
        leaf = self._leaf(split.leaf)
        rows = self._rows(leaf, data)
        a_t, a_v = self.arities[leaf.var], self.arities[split.var]
        sub = data.values[rows]
        flat = np.bincount(sub[:, split.var] * a_t + sub[:, leaf.var], minlength=a_t * a_v)
        return flat.reshape(a_v, a_t)

    def likelihood_gain(self, split: Split, data: Dataset) -> float:
        """Change in training log-likelihood from applying ``split``.

        Depends only on the counts at the leaf, so it stays fixed while the
        leaf exists.
        """
        leaf = self._leaf(split.leaf)
        a_t = self.arities[leaf.var]
        parts = self.child_counts(split, data)
        before = count_log_likelihood(parts.sum(axis=0),
                                      estimate_leaf_distribution(parts.sum(axis=0), a_t, self.estimator))
        after = sum(count_log_likelihood(c, estimate_leaf_distribution(c, a_t, self.estimator)) for c in parts)
        return after - before

    def apply_split(self, split: Split, data: Dataset | None = None) -> list[Leaf]:
        """Replace the leaf by an interior node with one new leaf per value."""
        if not self.is_valid_split(split):
            raise InvalidSplitError(f"split of leaf {split.leaf} on variable {split.var} is not valid")
        leaf = self.leaves[split.leaf]
        target, v = leaf.var, split.var
        a_v = self.arities[v]
        if data is None:
            data = self.data
        if data is not None:
            parts = self.child_counts(split, data)
            rows = self._rows(leaf, data)
            col = data.values[rows, v]
            row_parts = [rows[col == i] if data is self.data else None for i in range(a_v)]
        else:
            parts = np.zeros((a_v, self.arities[target]), dtype=np.int64)
            row_parts = [None] * a_v
        new = [self._new_leaf(target, leaf.path + ((v, i),), parts[i], row_parts[i]) for i in range(a_v)]
        self.trees[target].replace_leaf(leaf, TreeSplit(v, list(new)))
        del self.leaves[leaf.id]
        if v not in self.parents[target]:
            self.parents[target].add(v)
            # arc v -> target: v and all its ancestors reach target and below
            reach = self.descendants[target].copy()
            reach[target] = True
            ancestors = self.descendants[:, v].copy()
            ancestors[v] = True
            self.descendants[ancestors] |= reach
        return new

    # -- probabilities ------------------------------------------------

    def leaf_for(self, var: int, assignment) -> Leaf:
        return self.trees[var].leaf_for(assignment)

    def joint_probability(self, assignment: Sequence[int]) -> float:
        if len(assignment) != self.n_vars:
            raise DataError(f"assignment covers {len(assignment)} of {self.n_vars} variables")
        p = 1.0
        for var, tree in enumerate(self.trees):
            val = assignment[var]
            if not 0 <= val < self.arities[var]:
                raise DataError(f"value {val} out of range for variable {var}")
            p *= tree.leaf_for(assignment).theta[val]
        return p

    def _route(self, var: int, values: np.ndarray) -> Iterator[tuple[Leaf, np.ndarray]]:
        stack = [(self.trees[var].root, np.arange(values.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if not isinstance(node, TreeSplit):
                yield node, rows
                continue
            col = values[rows, node.var]
            for val, child in enumerate(node.children):
                stack.append((child, rows[col == val]))

    def log_likelihood_rows(self, values: np.ndarray) -> np.ndarray:
        """Per-row log joint probability of complete assignments."""
        values = np.asarray(values, dtype=np.int64)
        out = np.zeros(values.shape[0])
        with np.errstate(divide="ignore"):
            for var in range(self.n_vars):
                for leaf, rows in self._route(var, values):
                    out[rows] += np.log(leaf.theta[values[rows, var]])
        return out

    def log_likelihood(self, data: Dataset) -> float:
        if data.n_rows == 0:
            return 0.0
        return float(self.log_likelihood_rows(data.values).sum())

    def training_log_likelihood(self) -> float:
        """sum over leaves of sum_v count_v * log(theta_v)."""
        return sum(count_log_likelihood(leaf.counts, leaf.theta) for leaf in self.leaves.values())

    # -- summaries ----------------------------------------------------

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def parent_counts(self) -> list[int]:
        return [len(p) for p in self.parents]

    def is_acyclic(self) -> bool:
        indeg = [len(p) for p in self.parents]
        kids = [self.children_of(v) for v in range(self.n_vars)]
        ready = [v for v in range(self.n_vars) if indeg[v] == 0]
        seen = 0
        while ready:
            v = ready.pop()
            seen += 1
            for c in kids[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        return seen == self.n_vars

    # -- text format --------------------------------------------------

    def dumps(self) -> str:
        lines = [f"bn {self.n_vars} {self.estimator} {self.next_leaf_id}",
                 "arities " + " ".join(map(str, self.arities))]
        for tree in self.trees:
            lines.append(f"var {tree.var}")
            stack = [tree.root]
            while stack:
                node = stack.pop()
                if isinstance(node, TreeSplit):
                    lines.append(f"interior {node.var}")
                    stack.extend(reversed(node.children))
                else:
                    theta = " ".join(repr(float(t)) for t in node.theta)
                    counts = " ".join(str(int(c)) for c in node.counts)
                    lines.append(f"leaf {node.id} {theta} | {counts}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "BayesianNetwork":
        lines = [ln.split() for ln in text.splitlines() if ln.strip()]
        try:
            head = lines[0]
            if head[0] != "bn":
                raise DataError("missing 'bn' header")
            n, estimator, next_id = int(head[1]), head[2], int(head[3])
            arities = [int(x) for x in lines[1][1:]]
            if len(arities) != n:
                raise DataError("arity count does not match header")
            bn = cls(arities, estimator)
            pos = 2

            def read(var, path):
                nonlocal pos
                tok = lines[pos]
                pos += 1
                if tok[0] == "interior":
                    split_var = int(tok[1])
                    kids = [read(var, path + ((split_var, i),)) for i in range(arities[split_var])]
                    return TreeSplit(split_var, kids)
                if tok[0] != "leaf":
                    raise DataError(f"unexpected token {tok[0]!r}")
                bar = tok.index("|")
                theta = np.array([float(x) for x in tok[2:bar]])
                counts = np.array([int(x) for x in tok[bar + 1:]], dtype=np.int64)
                if theta.shape != (arities[var],) or counts.shape != (arities[var],):
                    raise DataError(f"leaf {tok[1]} has the wrong number of values")
                leaf = Leaf(int(tok[1]), var, path, counts, theta)
                bn.leaves[leaf.id] = leaf
                return leaf

            for var in range(n):
                if lines[pos][:2] != ["var", str(var)]:
                    raise DataError(f"expected tree for variable {var}")
                pos += 1
                bn.trees.append(DecisionTreeCpd(var, read(var, ())))
            bn.next_leaf_id = next_id
            for var, tree in enumerate(bn.trees):
                for p in tree.split_vars():
                    bn.parents[var].add(p)
            bn._rebuild_descendants()
            if not bn.is_acyclic():
                raise DataError("parent graph has a cycle")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"malformed network text: {exc}") from exc
        return bn

    def _rebuild_descendants(self):
        n = self.n_vars
        kids = [self.children_of(v) for v in range(n)]
        desc = np.zeros((n, n), dtype=bool)
        for v in range(n):
            stack = list(kids[v])
            while stack:
                c = stack.pop()
                if not desc[v, c]:
                    desc[v, c] = True
                    stack.extend(kids[c])
        self.descendants = desc


def joint_probability(bn: BayesianNetwork, assignment) -> float:
    return bn.joint_probability(assignment)


def log_likelihood(bn: BayesianNetwork, data: Dataset) -> float:
    return bn.log_likelihood(data)


def likelihood_gain(bn: BayesianNetwork, split: Split, data: Dataset) -> float:
    return bn.likelihood_gain(split, data)


def is_valid_split(bn: BayesianNetwork, split: Split) -> bool:
    return bn.is_valid_split(split)


def apply_split_to_tree(bn: BayesianNetwork, split: Split, data: Dataset | None = None) -> list[Leaf]:
    return bn.apply_split(split, data)
