"""Gibbs sampling on the network view, compiled with numba.

Trees are flattened into arrays so that one Markov-blanket update is a few
array walks.  Each chain reseeds numba's generator from a seed derived
from the scenario seed, so results are reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .bn import BayesianNetwork, TreeSplit
from .errors import DataError


@dataclass(frozen=True)
class GibbsScenario:
    chains: int
    burn_in: int
    samples: int
    seed: int = 0

    def __post_init__(self):
        if self.chains < 1 or self.samples < 1 or self.burn_in < 0:
            raise DataError("need chains >= 1, samples >= 1 and burn-in >= 0")


SCENARIOS = {
    "fast": (1, 100, 1000),
    "medium": (10, 100, 1000),
    "slow": (10, 1000, 10_000),
    "veryslow": (10, 10_000, 100_000),
}


def scenario(name: str, seed: int = 0) -> GibbsScenario:
    try:
        chains, burn_in, samples = SCENARIOS[name]
    except KeyError:
        raise DataError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    return GibbsScenario(chains, burn_in, samples, seed)


@dataclass
class CompiledNetwork:
    arities: np.ndarray
    roots: np.ndarray
    node_var: np.ndarray
    node_kids: np.ndarray
    kids: np.ndarray
    node_theta: np.ndarray
    thetas: np.ndarray
    child_ptr: np.ndarray
    child_idx: np.ndarray


def compile_network(bn: BayesianNetwork) -> CompiledNetwork:
    node_var, node_kids, node_theta, kids, thetas = [], [], [], [], []
    roots = []

    def emit(node) -> int:
        k = len(node_var)
        node_var.append(-1)
        node_kids.append(-1)
        node_theta.append(-1)
        if isinstance(node, TreeSplit):
            node_var[k] = node.var
            start = len(kids)
            kids.extend([-1] * len(node.children))
            node_kids[k] = start
            for i, child in enumerate(node.children):
                kids[start + i] = emit(child)
        else:
            node_theta[k] = len(thetas)
            thetas.extend(float(t) for t in node.theta)
        return k

    for tree in bn.trees:
        roots.append(emit(tree.root))
    child_ptr = [0]
    child_idx = []
    for v in range(bn.n_vars):
        child_idx.extend(bn.children_of(v))
        child_ptr.append(len(child_idx))
    as_int = lambda xs: np.asarray(xs, dtype=np.int64)
    return CompiledNetwork(as_int(bn.arities), as_int(roots), as_int(node_var), as_int(node_kids),
                           as_int(kids), as_int(node_theta), np.asarray(thetas, dtype=float),
                           as_int(child_ptr), as_int(child_idx))


@njit(cache=True)
def _walk(var, state, roots, node_var, node_kids, kids):
    k = roots[var]
    while node_var[k] >= 0:
        k = kids[node_kids[k] + state[node_var[k]]]
    return k


@njit(cache=True)
def _blanket(v, state, arities, roots, node_var, node_kids, kids, node_theta, thetas,
             child_ptr, child_idx, probs):
    """Unnormalized P(v = val | blanket) into ``probs``; restores state[v]."""
    keep = state[v]
    total = 0.0
    # v never appears in its own tree, so its CPD row is fixed across values
    row = node_theta[_walk(v, state, roots, node_var, node_kids, kids)]
    for val in range(arities[v]):
        state[v] = val
        p = thetas[row + val]
        for t in range(child_ptr[v], child_ptr[v + 1]):
            ch = child_idx[t]
            p *= thetas[node_theta[_walk(ch, state, roots, node_var, node_kids, kids)] + state[ch]]
        probs[val] = p
        total += p
    state[v] = keep
    return total


@njit(cache=True)
def _run_chains(arities, roots, node_var, node_kids, kids, node_theta, thetas, child_ptr, child_idx,
                fixed, query_vars, query_vals, burn_in, samples, seeds):
    n = arities.shape[0]
    state = np.empty(n, np.int64)
    probs = np.empty(arities.max(), np.float64)
    hits = 0
    for c in range(seeds.shape[0]):
        np.random.seed(seeds[c])
        for v in range(n):
            if fixed[v] >= 0:
                state[v] = fixed[v]
            else:
                state[v] = np.random.randint(0, arities[v])
        for it in range(burn_in + samples):
            for v in range(n):
                if fixed[v] >= 0:
                    continue
                total = _blanket(v, state, arities, roots, node_var, node_kids, kids, node_theta,
                                 thetas, child_ptr, child_idx, probs)
                u = np.random.random() * total
                chosen = arities[v] - 1
                if total <= 0.0:
                    # zero-probability state from unsmoothed parameters: move uniformly
                    chosen = np.random.randint(0, arities[v])
                acc = 0.0
                for val in range(arities[v] if total > 0.0 else 0):
                    acc += probs[val]
                    if u < acc:
                        chosen = val
                        break
                state[v] = chosen
            if it >= burn_in:
                match = True
                for q in range(query_vars.shape[0]):
                    if state[query_vars[q]] != query_vals[q]:
                        match = False
                        break
                if match:
                    hits += 1
    return hits


def blanket_conditional_compiled(net: CompiledNetwork, var: int, state) -> np.ndarray:
    st = np.asarray(state, dtype=np.int64).copy()
    probs = np.empty(int(net.arities.max()))
    total = _blanket(var, st, net.arities, net.roots, net.node_var, net.node_kids, net.kids,
                     net.node_theta, net.thetas, net.child_ptr, net.child_idx, probs)
    return probs[: net.arities[var]] / total


def chain_seeds(scn: GibbsScenario, stream: int) -> np.ndarray:
    ss = np.random.SeedSequence([scn.seed, stream])
    return ss.generate_state(scn.chains, dtype=np.uint32).astype(np.int64)


def gibbs_query(bn: BayesianNetwork, query, scn: GibbsScenario, stream: int = 0,
                net: CompiledNetwork | None = None) -> float:
    """Smoothed log-probability estimate of the query configuration.

    All chains are pooled; one pseudo-count is spread evenly over the joint
    states of the query variables.
    """
    if net is None:
        net = compile_network(bn)
    fixed = np.full(bn.n_vars, -1, dtype=np.int64)
    for var, val in query.evidence:
        fixed[var] = val
    qv = np.array([v for v, _ in query.query], dtype=np.int64)
    qx = np.array([x for _, x in query.query], dtype=np.int64)
    hits = _run_chains(net.arities, net.roots, net.node_var, net.node_kids, net.kids, net.node_theta,
                       net.thetas, net.child_ptr, net.child_idx, fixed, qv, qx,
                       scn.burn_in, scn.samples, chain_seeds(scn, stream))
    n_states = 1
    for v in qv:
        n_states *= int(bn.arities[v])
    total = scn.chains * scn.samples
    return math.log((hits + 1.0 / n_states) / (total + 1.0))
