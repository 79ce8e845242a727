"""Incremental circuit surgery for splitting one leaf distribution on a variable.

Given a leaf distribution D (parameter nodes d_j) and a variable V
(indicators v_i), the nodes strictly between the mutual ancestors of D and
V and those leaves are copied once per value of V, each copy conditioned on
that value, and every mutual ancestor's D-side and V-side children are
replaced by a sum over per-value products.

The same copy plan drives both the real rewrite and the dry run that
predicts its edge cost, so the two can only disagree through the removal
accounting, which each side does independently.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .bn import BayesianNetwork, Leaf, Split
from .circuit import INDICATOR, PARAMETER, PRODUCT, ArithmeticCircuit, check_properties
from .data import Dataset
from .errors import InternalError, InvalidSplitError


@dataclass
class MutualAncestorAnalysis:
    leaf: int
    var: int
    d_params: dict[int, int]          # parameter node -> value j of d_j
    d_anc: set[int]                   # D-ancestors, including the d_j
    v_mask: dict[int, int]            # V-ancestor -> bitmask of V values below it
    mutual: list[int]                 # mutual ancestors, ascending
    pairs: dict[int, tuple[int, int]]  # mutual ancestor -> (n_V, n_D)
    between: set[int]                 # interior nodes strictly below some MA

    def footprint(self) -> frozenset[int]:
        """Nodes above exactly one of D and V; a copy or rewire of any of them can alter the cost."""
        xor = (self.d_anc ^ self.v_mask.keys()) - self.d_params.keys()
        return frozenset(xor)

    def copy_footprint(self) -> frozenset[int]:
        """Nodes that alter the cost only when copied: the mutual ancestors.

        They are the outside parents that decide which in-between nodes
        survive, so copying one can change the removal count.
        """
        return frozenset(self.mutual)


@dataclass
class DryRun:
    edge_cost: int
    param_delta: int
    aborted: bool = False


@dataclass
class SplitOutcome:
    new_leaves: list[Leaf]
    changed: set[int]                 # copied nodes plus rewired mutual ancestors
    copied: set[int]
    edge_delta: int
    param_delta: int
    removed: set[int] = field(default_factory=set)


def _upward(parents: dict[int, list[int]], starts) -> set[int]:
    seen = set(starts)
    stack = list(seen)
    while stack:
        n = stack.pop()
        for p in parents.get(n, ()):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def find_mutual_ancestors(circuit: ArithmeticCircuit, leaf: int, var: int) -> MutualAncestorAnalysis:
    parents = circuit.parents()
    try:
        d_nodes = circuit.parameter_nodes(leaf)
    except KeyError:
        raise InvalidSplitError(f"leaf distribution {leaf} has no parameters in the circuit") from None
    if circuit.leaf_variable[leaf] == var:
        raise InvalidSplitError("cannot split a distribution on its own variable")
    d_params = {n: j for j, n in enumerate(d_nodes)}
    d_anc = _upward(parents, d_nodes)
    v_mask: dict[int, int] = {}
    for i in range(circuit.arities[var]):
        bit = 1 << i
        for n in _upward(parents, [circuit.indicator(var, i)]):
            v_mask[n] = v_mask.get(n, 0) | bit
    children = circuit.children
    both = {n for n in d_anc if n in v_mask}
    mutual = sorted(n for n in both if not any(c in both for c in children[n]))
    if not mutual:
        raise InternalError(f"leaf {leaf} and variable {var} have no mutual ancestor")
    pairs = {}
    for m in mutual:
        if circuit.kind[m] != PRODUCT:
            raise InternalError(f"mutual ancestor {m} is not a product node")
        vs = [c for c in children[m] if c in v_mask]
        ds = [c for c in children[m] if c in d_anc]
        if len(vs) != 1 or len(ds) != 1:
            raise InternalError(f"mutual ancestor {m} does not have exactly one V-side and one D-side child")
        pairs[m] = (vs[0], ds[0])
    between: set[int] = set()
    kind = circuit.kind
    for m in mutual:
        n_v, n_d = pairs[m]
        for start, side in ((n_v, v_mask), (n_d, d_anc)):
            stack = [start]
            while stack:
                n = stack.pop()
                if n in between or kind[n] in (INDICATOR, PARAMETER):
                    continue
                between.add(n)
                stack.extend(c for c in children[n] if c in side)
    return MutualAncestorAnalysis(leaf, var, d_params, d_anc, v_mask, mutual, pairs, between)


# Plan tokens: ("old", node) | ("copy", value, node) | ("param", value, j) | ("ind", value)


class _Planner:
    """Lazily builds the per-value copies reachable from the new MA sums."""

    def __init__(self, circuit: ArithmeticCircuit, analysis: MutualAncestorAnalysis):
        self.circuit = circuit
        self.a = analysis
        self.copies: dict[tuple[int, int], list[tuple]] = {}
        self.order: list[tuple[int, int]] = []
        self.surgery: list[tuple[int, list[tuple[int, list[tuple]]]]] = []
        self.edges = 0
        self.params_used: set[tuple[int, int]] = set()

    def token(self, c: int, i: int):
        circ, a = self.circuit, self.a
        if circ.kind[c] == INDICATOR and circ.var[c] == a.var:
            return None
        mask = a.v_mask.get(c)
        if mask is not None and not (mask >> i) & 1:
            return None
        j = a.d_params.get(c)
        if j is not None:
            self.params_used.add((i, j))
            return ("param", i, j)
        if c in a.between:
            return ("copy", i, c)
        return ("old", c)

    def ensure(self, node: int, i: int, limit: float | None):
        """Plan the copy of ``node`` for value ``i`` (children first)."""
        if (i, node) in self.copies:
            return False
        children = self.circuit.children
        between = self.a.between
        stack = [(node, False)]
        while stack:
            n, expanded = stack.pop()
            if (i, n) in self.copies:
                continue
            if not expanded:
                stack.append((n, True))
                for c in reversed(children[n]):
                    if c in between and (i, c) not in self.copies:
                        tok = self.token(c, i)
                        if tok is not None:
                            stack.append((c, False))
                continue
            toks = [t for t in (self.token(c, i) for c in children[n]) if t is not None]
            if not toks:
                raise InternalError(f"copy of node {n} for value {i} would have no children")
            self.copies[(i, n)] = toks
            self.order.append((i, n))
            self.edges += len(toks)
            if limit is not None and self.edges > limit:
                return True
        return False

    def run(self, limit: float | None = None) -> bool:
        """Build the full plan; returns True if the edge count passed ``limit``."""
        a = self.a
        for m in a.mutual:
            n_v, n_d = a.pairs[m]
            branches = []
            for i in range(self.circuit.arities[a.var]):
                if not (a.v_mask[m] >> i) & 1:
                    continue
                toks = [("ind", i)]
                for c in (n_v, n_d):
                    tok = self.token(c, i)
                    if tok is None:
                        continue
                    if tok[0] == "copy" and self.ensure(c, i, limit):
                        return True
                    toks.append(tok)
                branches.append((i, toks))
                self.edges += len(toks)
            self.surgery.append((m, branches))
            # new sum node, and m trades two children for one
            self.edges += len(branches) - 1
            if limit is not None and self.edges > limit:
                return True
        return False


def _removed_between(circuit: ArithmeticCircuit, a: MutualAncestorAnalysis) -> set[int]:
    """Nodes of ``between`` left unreachable once the MAs are rewired."""
    parents = circuit.parents()
    mutual = set(a.mutual)
    survivors = set()
    stack = [n for n in a.between
             if any(p not in a.between and p not in mutual for p in parents[n])]
    while stack:
        n = stack.pop()
        if n in survivors:
            continue
        survivors.add(n)
        stack.extend(c for c in circuit.children[n] if c in a.between)
    return a.between - survivors


def edge_cost_dry_run(circuit: ArithmeticCircuit, split: Split,
                      analysis: MutualAncestorAnalysis | None = None,
                      abort_above: float | None = None) -> DryRun:
    """Edges the split would add, without touching the circuit.

    With ``abort_above`` set, counting stops as soon as the cost is known
    to exceed it; the returned cost is then a lower bound above the limit.
    """
    if analysis is None:
        analysis = find_mutual_ancestors(circuit, split.leaf, split.var)
    removed = _removed_between(circuit, analysis)
    removed_edges = sum(len(circuit.children[n]) for n in removed)
    planner = _Planner(circuit, analysis)
    limit = None if abort_above is None else abort_above + removed_edges
    aborted = planner.run(limit)
    cost = planner.edges - removed_edges
    param_delta = len(planner.params_used) - len(analysis.d_params)
    return DryRun(cost, param_delta, aborted)


def split_ac(circuit: ArithmeticCircuit, split: Split, new_leaves: list[Leaf],
             analysis: MutualAncestorAnalysis | None = None) -> SplitOutcome:
    """Rewrite ``circuit`` in place so that D is replaced by the new leaves.

    ``new_leaves[i]`` is the distribution used when the split variable takes
    value ``i``.  Returns the changed-node set used for cost invalidation.
    """
    if analysis is None:
        analysis = find_mutual_ancestors(circuit, split.leaf, split.var)
    elif (analysis.leaf, analysis.var) != (split.leaf, split.var):
        raise InvalidSplitError("analysis belongs to a different split")
    a = analysis
    for n in a.mutual:
        if not circuit.alive[n]:
            raise InvalidSplitError("stale analysis: a mutual ancestor is dead")
    arity_v = circuit.arities[a.var]
    if len(new_leaves) != arity_v:
        raise InvalidSplitError(f"expected {arity_v} new leaves, got {len(new_leaves)}")
    target = circuit.leaf_variable[a.leaf]
    edges_before, params_before = circuit.n_edges, circuit.n_params

    planner = _Planner(circuit, a)
    planner.run()

    param_node = {}
    for i, leaf in enumerate(new_leaves):
        if leaf.var != target:
            raise InvalidSplitError("new leaves must belong to the split distribution's variable")
        for j, w in enumerate(leaf.theta):
            param_node[(i, j)] = circuit.add_parameter(leaf.id, target, j, float(w))

    made: dict[tuple[int, int], int] = {}

    def resolve(tok):
        tag = tok[0]
        if tag == "old":
            return tok[1]
        if tag == "copy":
            return made[(tok[1], tok[2])]
        if tag == "param":
            return param_node[(tok[1], tok[2])]
        return circuit.indicator(a.var, tok[1])

    kind = circuit.kind
    for key in planner.order:
        kids = [resolve(t) for t in planner.copies[key]]
        n = key[1]
        made[key] = circuit.add_product(kids) if kind[n] == PRODUCT else circuit.add_sum(kids)

    for m, branches in planner.surgery:
        prods = [circuit.add_product([resolve(t) for t in toks]) for _, toks in branches]
        n_sum = circuit.add_sum(prods)
        n_v, n_d = a.pairs[m]
        old = circuit.children[m]
        at = min(old.index(n_v), old.index(n_d))
        kept = [c for c in old if c != n_v and c != n_d]
        kept.insert(at, n_sum)
        circuit.set_children(m, kept)

    removed = circuit.garbage_collect()
    for n in a.d_params:
        if circuit.alive[n]:
            raise InternalError(f"old parameter node {n} is still reachable after the split")
    changed = set(a.between) | set(a.mutual)
    return SplitOutcome(list(new_leaves), changed, set(a.between), circuit.n_edges - edges_before,
                        circuit.n_params - params_before, removed)


def apply_split(circuit: ArithmeticCircuit, bn: BayesianNetwork, split: Split,
                data: Dataset | None = None, check: bool = False) -> SplitOutcome:
    """Apply ``split`` to the network and the circuit in lockstep."""
    if not bn.is_valid_split(split):
        raise InvalidSplitError(f"split of leaf {split.leaf} on variable {split.var} is not valid")
    analysis = find_mutual_ancestors(circuit, split.leaf, split.var)
    new_leaves = bn.apply_split(split, data)
    outcome = split_ac(circuit, split, new_leaves, analysis)
    if check:
        report = check_properties(circuit)
        if not report.ok:
            raise InternalError(f"split broke circuit properties: {report}")
    return outcome
