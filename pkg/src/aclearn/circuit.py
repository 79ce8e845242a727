"""Arithmetic circuits computing the network polynomial of a Bayesian network.

Nodes live in an append-only arena addressed by integer ids.  Removing a
node only marks it dead, so ids held by the learner's caches stay valid
until the circuit is explicitly compacted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, InternalError


class NodeKind(IntEnum):
    SUM = 0
    PRODUCT = 1
    INDICATOR = 2
    PARAMETER = 3


SUM = NodeKind.SUM
PRODUCT = NodeKind.PRODUCT
INDICATOR = NodeKind.INDICATOR
PARAMETER = NodeKind.PARAMETER

_KIND_CODES = {SUM: "+", PRODUCT: "*", INDICATOR: "i", PARAMETER: "p"}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}

NEG_INF = float("-inf")


class Evidence:
    """Indicator settings, one 0/1 vector per variable.

    A variable whose indicators are all 1 is summed out; a variable with a
    single 1 is observed.
    """

    __slots__ = ("settings",)

    def __init__(self, settings: Sequence[Sequence[int]]):
        rows = []
        for var, row in enumerate(settings):
            row = tuple(int(s) for s in row)
            if any(s not in (0, 1) for s in row):
                raise DataError(f"indicator settings for variable {var} must be 0 or 1")
            if not any(row):
                raise DataError(f"variable {var} has no indicator set to 1")
            rows.append(row)
        self.settings = tuple(rows)

    @classmethod
    def from_assignment(cls, arities: Sequence[int], assignment: Mapping[int, int]) -> "Evidence":
        settings = [[1] * a for a in arities]
        for var, val in assignment.items():
            if not 0 <= var < len(arities):
                raise DataError(f"unknown variable {var}")
            if not 0 <= val < arities[var]:
                raise DataError(f"value {val} out of range for variable {var} (arity {arities[var]})")
            settings[var] = [0] * arities[var]
            settings[var][val] = 1
        return cls(settings)

    @classmethod
    def empty(cls, arities: Sequence[int]) -> "Evidence":
        return cls([[1] * a for a in arities])

    def __eq__(self, other):
        return isinstance(other, Evidence) and self.settings == other.settings

    def __repr__(self):
        return f"Evidence({self.settings!r})"


@dataclass
class PropertyReport:
    smooth: bool
    decomposable: bool
    deterministic: bool
    smooth_violation: str | None = None
    decomposable_violation: str | None = None
    deterministic_violation: str | None = None

    @property
    def ok(self) -> bool:
        return self.smooth and self.decomposable and self.deterministic

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.smooth, self.decomposable, self.deterministic)


@dataclass
class NodeScope:
    indicator_vars: int
    parameter_vars: int


class ArithmeticCircuit:
    """Rooted DAG of sum, product, indicator and parameter nodes.

    ``leaf_variable`` maps each leaf-distribution id to the variable whose
    CPD the distribution belongs to; parameter nodes refer to distributions
    by that id.
    """

    def __init__(self, arities: Sequence[int]):
        arities = tuple(int(a) for a in arities)
        if not arities:
            raise DataError("a circuit needs at least one variable")
        if any(a < 2 for a in arities):
            raise DataError("every variable needs arity >= 2")
        self.arities = arities
        self.kind: list[int] = []
        self.children: list[list[int]] = []
        self.alive: list[bool] = []
        self.var: list[int] = []
        self.value: list[int] = []
        self.leaf: list[int] = []
        self.weight: list[float] = []
        self.root = -1
        self.indicator_index: dict[tuple[int, int], int] = {}
        self.parameter_index: dict[tuple[int, int], int] = {}
        self.leaf_variable: dict[int, int] = {}
        self._n_edges = 0
        self._n_params = 0
        self._n_live = 0
        self._topo: list[int] | None = None
        self._parents: dict[int, list[int]] | None = None
        for var, arity in enumerate(arities):
            for val in range(arity):
                self._append(INDICATOR, [], var=var, value=val)

    # -- construction -------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.arities)

    @property
    def n_edges(self) -> int:
        return self._n_edges

    @property
    def n_params(self) -> int:
        return self._n_params

    @property
    def node_count(self) -> int:
        return self._n_live

    def _touch(self):
        self._topo = None
        self._parents = None

    def _append(self, kind, children, var=-1, value=-1, leaf=-1, weight=0.0) -> int:
        nid = len(self.kind)
        self.kind.append(kind)
        self.children.append(children)
        self.alive.append(True)
        self.var.append(var)
        self.value.append(value)
        self.leaf.append(leaf)
        self.weight.append(weight)
        self._n_edges += len(children)
        self._n_live += 1
        if kind == INDICATOR:
            self.indicator_index[(var, value)] = nid
        elif kind == PARAMETER:
            self.parameter_index[(leaf, value)] = nid
            self._n_params += 1
        self._touch()
        return nid

    def indicator(self, var: int, value: int) -> int:
        return self.indicator_index[(var, value)]

    def add_parameter(self, leaf: int, var: int, value: int, weight: float) -> int:
        if not 0 <= weight <= 1.0:
            raise DataError(f"parameter weight {weight!r} outside [0, 1]")
        if (leaf, value) in self.parameter_index:
            raise InternalError(f"parameter ({leaf}, {value}) already exists")
        known = self.leaf_variable.setdefault(leaf, var)
        if known != var:
            raise InternalError(f"leaf {leaf} belongs to variable {known}, not {var}")
        return self._append(PARAMETER, [], var=var, value=value, leaf=leaf, weight=float(weight))

    def _check_children(self, children: Sequence[int]) -> list[int]:
        children = list(children)
        if not children:
            raise InternalError("interior nodes need at least one child")
        if len(set(children)) != len(children):
            raise InternalError(f"duplicate child edge in {children}")
        for c in children:
            if not self.alive[c]:
                raise InternalError(f"child {c} is dead")
        return children

    def add_sum(self, children: Sequence[int]) -> int:
        return self._append(SUM, self._check_children(children))

    def add_product(self, children: Sequence[int]) -> int:
        return self._append(PRODUCT, self._check_children(children))

    def set_children(self, node: int, children: Sequence[int]):
        if self.kind[node] not in (SUM, PRODUCT):
            raise InternalError("only interior nodes have children")
        children = self._check_children(children)
        self._n_edges += len(children) - len(self.children[node])
        self.children[node] = children
        self._touch()

    def set_root(self, node: int):
        self.root = node
        self._touch()

    def kill(self, node: int):
        if not self.alive[node]:
            return
        kind = self.kind[node]
        if kind == INDICATOR:
            raise InternalError("indicator nodes are never removed")
        self.alive[node] = False
        self._n_live -= 1
        self._n_edges -= len(self.children[node])
        if kind == PARAMETER:
            self._n_params -= 1
            del self.parameter_index[(self.leaf[node], self.value[node])]
        self._touch()

    def parameter_nodes(self, leaf: int) -> list[int]:
        var = self.leaf_variable[leaf]
        return [self.parameter_index[(leaf, j)] for j in range(self.arities[var])]

    # -- traversal ----------------------------------------------------

    def topological_order(self) -> list[int]:
        """Live nodes reachable from the root, children before parents."""
        if self._topo is not None:
            return self._topo
        if self.root < 0:
            raise InternalError("circuit has no root")
        children = self.children
        seen = bytearray(len(self.kind))
        order = []
        stack = [(self.root, 0)]
        seen[self.root] = 1
        while stack:
            node, idx = stack[-1]
            kids = children[node]
            if idx < len(kids):
                stack[-1] = (node, idx + 1)
                c = kids[idx]
                if not seen[c]:
                    seen[c] = 1
                    stack.append((c, 0))
            else:
                stack.pop()
                order.append(node)
        self._topo = order
        return order

    def parents(self) -> dict[int, list[int]]:
        """Parent lists for every reachable node (derived, cached until mutation)."""
        if self._parents is not None:
            return self._parents
        parents: dict[int, list[int]] = {n: [] for n in self.topological_order()}
        for n in self.topological_order():
            for c in self.children[n]:
                parents[c].append(n)
        self._parents = parents
        return parents

    def live_nodes(self) -> Iterable[int]:
        return (n for n, a in enumerate(self.alive) if a)

    # -- evaluation ---------------------------------------------------

    def _check_evidence(self, evidence) -> Evidence:
        if not isinstance(evidence, Evidence):
            evidence = Evidence.from_assignment(self.arities, evidence)
        if len(evidence.settings) != self.n_vars:
            raise DataError(f"evidence covers {len(evidence.settings)} variables, circuit has {self.n_vars}")
        for var, row in enumerate(evidence.settings):
            if len(row) != self.arities[var]:
                raise DataError(f"evidence for variable {var} has {len(row)} values, arity is {self.arities[var]}")
        return evidence

    def evaluate(self, evidence, counter: dict | None = None) -> float:
        """Network-polynomial value under the indicator settings (one bottom-up pass)."""
        settings = self._check_evidence(evidence).settings
        kind, children, var, value, weight = self.kind, self.children, self.var, self.value, self.weight
        vals = {}
        order = self.topological_order()
        for n in order:
            k = kind[n]
            if k == PARAMETER:
                vals[n] = weight[n]
            elif k == INDICATOR:
                vals[n] = float(settings[var[n]][value[n]])
            elif k == PRODUCT:
                acc = 1.0
                for c in children[n]:
                    acc *= vals[c]
                vals[n] = acc
            else:
                acc = 0.0
                for c in children[n]:
                    acc += vals[c]
                vals[n] = acc
        if counter is not None:
            counter["visits"] = counter.get("visits", 0) + len(order)
        return vals[self.root]

    def evaluate_log(self, evidence, counter: dict | None = None) -> float:
        """Log of :meth:`evaluate`, computed in log space; zero maps to ``-inf``."""
        settings = self._check_evidence(evidence).settings
        kind, children, var, value, weight = self.kind, self.children, self.var, self.value, self.weight
        vals = {}
        order = self.topological_order()
        log = math.log
        exp = math.exp
        for n in order:
            k = kind[n]
            if k == PARAMETER:
                vals[n] = log(weight[n]) if weight[n] > 0 else NEG_INF
            elif k == INDICATOR:
                vals[n] = 0.0 if settings[var[n]][value[n]] else NEG_INF
            elif k == PRODUCT:
                acc = 0.0
                for c in children[n]:
                    acc += vals[c]
                vals[n] = acc
            else:
                terms = [vals[c] for c in children[n]]
                top = max(terms)
                if top == NEG_INF:
                    vals[n] = NEG_INF
                else:
                    vals[n] = top + log(sum(exp(t - top) for t in terms))
        if counter is not None:
            counter["visits"] = counter.get("visits", 0) + len(order)
        return vals[self.root]

    def evaluate_batch(self, rows: np.ndarray, log: bool = False) -> np.ndarray:
        """Evaluate many complete or partial assignments at once.

        ``rows`` is an integer matrix with one column per variable; a
        negative entry leaves that variable summed out.
        """
        rows = np.asarray(rows)
        if rows.ndim != 2 or rows.shape[1] != self.n_vars:
            raise DataError(f"expected a matrix with {self.n_vars} columns")
        m = rows.shape[0]
        kind, children = self.kind, self.children
        vals = {}
        with np.errstate(divide="ignore"):
            for n in self.topological_order():
                k = kind[n]
                if k == PARAMETER:
                    w = self.weight[n]
                    vals[n] = np.full(m, (math.log(w) if w > 0 else NEG_INF) if log else w)
                elif k == INDICATOR:
                    col = rows[:, self.var[n]]
                    on = (col < 0) | (col == self.value[n])
                    vals[n] = np.where(on, 0.0, NEG_INF) if log else on.astype(float)
                elif k == PRODUCT:
                    acc = vals[children[n][0]].copy()
                    for c in children[n][1:]:
                        if log:
                            acc += vals[c]
                        else:
                            acc *= vals[c]
                    vals[n] = acc
                else:
                    stacked = np.stack([vals[c] for c in children[n]])
                    if log:
                        top = stacked.max(axis=0)
                        safe = np.where(np.isfinite(top), top, 0.0)
                        vals[n] = safe + np.log(np.exp(stacked - safe).sum(axis=0))
                    else:
                        vals[n] = stacked.sum(axis=0)
        return vals[self.root]

    # -- structure ----------------------------------------------------

    def count_edges(self) -> int:
        """Recount of parent-to-child links over live nodes."""
        return sum(len(self.children[n]) for n in self.live_nodes())

    def count_parameters(self) -> int:
        return sum(1 for n in self.live_nodes() if self.kind[n] == PARAMETER)

    def garbage_collect(self) -> set[int]:
        """Mark every non-indicator node unreachable from the root as dead."""
        reachable = set(self.topological_order())
        removed = set()
        for n in range(len(self.kind)):
            if self.alive[n] and n not in reachable and self.kind[n] != INDICATOR:
                removed.add(n)
        for n in removed:
            self.kill(n)
        return removed

    def scopes(self) -> dict[int, NodeScope]:
        """Indicator- and parameter-variable scopes (as bitmasks) per reachable node."""
        out = {}
        for n in self.topological_order():
            k = self.kind[n]
            if k == INDICATOR:
                out[n] = NodeScope(1 << self.var[n], 0)
            elif k == PARAMETER:
                out[n] = NodeScope(0, 1 << self.var[n])
            else:
                iv = pv = 0
                for c in self.children[n]:
                    iv |= out[c].indicator_vars
                    pv |= out[c].parameter_vars
                out[n] = NodeScope(iv, pv)
        return out

    def compact(self) -> "ArithmeticCircuit":
        """A copy holding only live nodes, renumbered in a deterministic order.

        Indicators come first (by variable, value); all other reachable
        nodes follow in depth-first post order from the root.
        """
        new = ArithmeticCircuit(self.arities)
        mapping = {self.indicator_index[key]: nid for key, nid in new.indicator_index.items()}
        for n in self.topological_order():
            k = self.kind[n]
            if k == INDICATOR:
                continue
            if k == PARAMETER:
                mapping[n] = new.add_parameter(self.leaf[n], self.var[n], self.value[n], self.weight[n])
            else:
                kids = [mapping[c] for c in self.children[n]]
                mapping[n] = new.add_sum(kids) if k == SUM else new.add_product(kids)
        new.set_root(mapping[self.root])
        return new

    def copy(self) -> "ArithmeticCircuit":
        new = object.__new__(ArithmeticCircuit)
        new.__dict__.update(self.__dict__)
        new.kind = list(self.kind)
        new.children = [list(c) for c in self.children]
        new.alive = list(self.alive)
        new.var = list(self.var)
        new.value = list(self.value)
        new.leaf = list(self.leaf)
        new.weight = list(self.weight)
        new.indicator_index = dict(self.indicator_index)
        new.parameter_index = dict(self.parameter_index)
        new.leaf_variable = dict(self.leaf_variable)
        new._topo = None
        new._parents = None
        return new

    # -- text format --------------------------------------------------

    def dumps(self) -> str:
        """Serialize the compacted circuit, one node per line."""
        c = self.compact()
        lines = [
            f"circuit {c.node_count} {c.root}",
            "arities " + " ".join(str(a) for a in c.arities),
            "leaves " + " ".join(f"{leaf}:{var}" for leaf, var in sorted(c.leaf_variable.items())),
        ]
        for n in range(len(c.kind)):
            k = c.kind[n]
            code = _KIND_CODES[k]
            if k == INDICATOR:
                lines.append(f"{n} {code} {c.var[n]} {c.value[n]}")
            elif k == PARAMETER:
                lines.append(f"{n} {code} {c.leaf[n]} {c.value[n]} {c.weight[n]!r}")
            else:
                lines.append(f"{n} {code} " + " ".join(str(x) for x in c.children[n]))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ArithmeticCircuit":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        try:
            head = lines[0].split()
            if head[0] != "circuit":
                raise DataError("missing 'circuit' header")
            count, root = int(head[1]), int(head[2])
            arities = [int(x) for x in lines[1].split()[1:]]
            leafvars = {}
            for tok in lines[2].split()[1:]:
                leaf, var = tok.split(":")
                leafvars[int(leaf)] = int(var)
            circ = cls(arities)
            body = lines[3:]
            if len(body) != count:
                raise DataError(f"header says {count} nodes, found {len(body)}")
            for ln in body:
                parts = ln.split()
                nid, code = int(parts[0]), parts[1]
                kind = _CODE_KINDS[code]
                if kind == INDICATOR:
                    got = circ.indicator(int(parts[2]), int(parts[3]))
                elif kind == PARAMETER:
                    leaf = int(parts[2])
                    got = circ.add_parameter(leaf, leafvars[leaf], int(parts[3]), float(parts[4]))
                else:
                    kids = [int(x) for x in parts[2:]]
                    got = circ.add_sum(kids) if kind == SUM else circ.add_product(kids)
                if got != nid:
                    raise DataError(f"node ids must be dense and in order (line for node {nid})")
            circ.set_root(root)
        except (IndexError, KeyError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"malformed circuit text: {exc}") from exc
        return circ


def build_initial_circuit(marginals: Sequence[Sequence[float]], leaf_ids: Sequence[int] | None = None,
                          tol: float = 1e-12) -> ArithmeticCircuit:
    """Product over variables of sum_j I(X = j) * P(X = j).

    With a single variable the root is that variable's sum node.
    """
    marginals = [np.asarray(m, dtype=float) for m in marginals]
    for i, m in enumerate(marginals):
        if np.any(m < 0):
            raise DataError(f"marginal of variable {i} has a negative probability")
        if abs(m.sum() - 1.0) > tol:
            raise DataError(f"marginal of variable {i} sums to {m.sum()!r}")
    if leaf_ids is None:
        leaf_ids = range(len(marginals))
    circ = ArithmeticCircuit([len(m) for m in marginals])
    sums = []
    for var, (m, leaf) in enumerate(zip(marginals, leaf_ids)):
        prods = []
        for j, p in enumerate(m):
            theta = circ.add_parameter(leaf, var, j, float(p))
            prods.append(circ.add_product([circ.indicator(var, j), theta]))
        sums.append(circ.add_sum(prods))
    circ.set_root(sums[0] if len(sums) == 1 else circ.add_product(sums))
    return circ


def evaluate(circuit: ArithmeticCircuit, evidence) -> float:
    return circuit.evaluate(evidence)


def evaluate_log(circuit: ArithmeticCircuit, evidence) -> float:
    return circuit.evaluate_log(evidence)


def count_edges(circuit: ArithmeticCircuit) -> int:
    return circuit.count_edges()


def count_parameters(circuit: ArithmeticCircuit) -> int:
    return circuit.count_parameters()


def garbage_collect(circuit: ArithmeticCircuit) -> ArithmeticCircuit:
    circuit.garbage_collect()
    return circuit


def _bits(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def check_properties(circuit: ArithmeticCircuit) -> PropertyReport:
    """Check smoothness, decomposability and determinism of every interior node.

    A sum with a single child is deterministic trivially: it cannot produce
    two terms over the same indicators.
    """
    report = PropertyReport(True, True, True)
    scope = circuit.scopes()
    # per node: variable -> bitmask of indicator values reachable
    values: dict[int, dict[int, int]] = {}
    kind, children = circuit.kind, circuit.children
    for n in circuit.topological_order():
        k = kind[n]
        if k == INDICATOR:
            values[n] = {circuit.var[n]: 1 << circuit.value[n]}
            continue
        if k == PARAMETER:
            values[n] = {}
            continue
        kids = children[n]
        merged: dict[int, int] = {}
        for c in kids:
            for v, mask in values[c].items():
                merged[v] = merged.get(v, 0) | mask
        values[n] = merged
        if k == SUM:
            first = scope[kids[0]]
            if report.smooth:
                for c in kids[1:]:
                    if (scope[c].indicator_vars != first.indicator_vars
                            or scope[c].parameter_vars != first.parameter_vars):
                        report.smooth = False
                        report.smooth_violation = f"sum {n}: children {kids[0]} and {c} differ in scope"
                        break
            if report.deterministic and len(kids) > 1:
                common = scope[n].indicator_vars
                for c in kids:
                    common &= scope[c].indicator_vars
                found = False
                for v in _bits(common):
                    seen = 0
                    ok = True
                    for c in kids:
                        mask = values[c].get(v, 0)
                        if mask == 0 or mask & seen:
                            ok = False
                            break
                        seen |= mask
                    if ok:
                        found = True
                        break
                if not found:
                    report.deterministic = False
                    report.deterministic_violation = f"sum {n}: no variable separates its children"
        elif report.decomposable:
            seen_i = seen_p = 0
            for c in kids:
                s = scope[c]
                if s.indicator_vars & seen_i or s.parameter_vars & seen_p:
                    report.decomposable = False
                    report.decomposable_violation = f"product {n}: child {c} overlaps its siblings"
                    break
                seen_i |= s.indicator_vars
                seen_p |= s.parameter_vars
    return report
