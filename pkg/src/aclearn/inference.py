"""Conditional queries: exact answers from circuits, query generation and scoring."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bn import BayesianNetwork
from .circuit import ArithmeticCircuit, Evidence
from .data import Dataset, atomic_write
from .errors import DataError, ImpossibleEvidenceError


@dataclass(frozen=True)
class Query:
    """P(query assignment | evidence assignment); both are (var, value) pairs."""

    query: tuple[tuple[int, int], ...]
    evidence: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        q = tuple(sorted((int(v), int(x)) for v, x in self.query))
        e = tuple(sorted((int(v), int(x)) for v, x in self.evidence))
        qvars = [v for v, _ in q]
        evars = [v for v, _ in e]
        if len(set(qvars)) != len(qvars) or len(set(evars)) != len(evars):
            raise DataError("a variable appears twice in one side of a query")
        if set(qvars) & set(evars):
            raise DataError("query and evidence variables must be disjoint")
        object.__setattr__(self, "query", q)
        object.__setattr__(self, "evidence", e)

    def check(self, arities: Sequence[int]):
        for v, x in self.query + self.evidence:
            if not 0 <= v < len(arities) or not 0 <= x < arities[v]:
                raise DataError(f"query term {v}={x} is out of range")

    def format(self) -> str:
        q = " ".join(f"{v}={x}" for v, x in self.query)
        e = " ".join(f"{v}={x}" for v, x in self.evidence)
        return f"q {q} | e {e}".rstrip()

    @classmethod
    def parse(cls, line: str) -> "Query":
        left, sep, right = line.partition("|")
        lt = left.split()
        rt = right.split()
        if not lt or lt[0] != "q" or (sep and (not rt or rt[0] != "e")):
            raise DataError(f"malformed query line: {line!r}")

        def terms(tokens):
            out = []
            for tok in tokens:
                v, eq, x = tok.partition("=")
                if not eq:
                    raise DataError(f"malformed query term {tok!r}")
                out.append((int(v), int(x)))
            return tuple(out)

        try:
            return cls(terms(lt[1:]), terms(rt[1:]) if sep else ())
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"malformed query line: {line!r}") from None


def query_conditional(circuit: ArithmeticCircuit, query: Query, counter: dict | None = None) -> float:
    """log P(Q | E) from two log-space circuit evaluations."""
    query.check(circuit.arities)
    joint = dict(query.query)
    joint.update(query.evidence)
    num = circuit.evaluate_log(Evidence.from_assignment(circuit.arities, joint), counter)
    den = circuit.evaluate_log(Evidence.from_assignment(circuit.arities, dict(query.evidence)), counter)
    if den == float("-inf"):
        raise ImpossibleEvidenceError("evidence has probability zero")
    return num - den


def markov_blanket_conditional(bn: BayesianNetwork, var: int, state: Sequence[int]) -> np.ndarray:
    """P(var | everything else), using only the variable's Markov blanket."""
    state = list(state)
    if len(state) != bn.n_vars:
        raise DataError("state must assign every variable")
    probs = np.empty(bn.arities[var])
    children = bn.children_of(var)
    for val in range(bn.arities[var]):
        state[var] = val
        p = bn.leaf_for(var, state).theta[val]
        for c in children:
            p *= bn.leaf_for(c, state).theta[state[c]]
        probs[val] = p
    return probs / probs.sum()


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def generate_queries(data: Dataset, query_frac: float, evidence_frac: float, seed: int,
                     max_rows: int | None = None) -> list[Query]:
    """One query per test row over random disjoint query/evidence variable sets."""
    if query_frac < 0 or evidence_frac < 0 or query_frac + evidence_frac > 1 + 1e-12:
        raise DataError("fractions must be non-negative and sum to at most 1")
    n = data.n_vars
    n_q = _round_half_up(query_frac * n)
    n_e = _round_half_up(evidence_frac * n)
    if query_frac > 0:
        n_q = max(n_q, 1)
    n_e = min(n_e, n - n_q)
    rng = np.random.default_rng(seed)
    rows = data.values if max_rows is None else data.values[:max_rows]
    out = []
    for row in rows:
        perm = rng.permutation(n)
        q = tuple((int(v), int(row[v])) for v in perm[:n_q])
        e = tuple((int(v), int(row[v])) for v in perm[n_q:n_q + n_e])
        out.append(Query(q, e))
    return out


@dataclass
class QueryResult:
    id: int
    logp: float | None
    per_var: float | None
    micros: float
    impossible: bool = False

    def to_json(self) -> str:
        return json.dumps({"id": self.id, "logp": self.logp, "per_var": self.per_var,
                           "us": round(self.micros, 1), "impossible": self.impossible}, sort_keys=True)


@dataclass
class QuerySetReport:
    mean_per_var: float
    answered: int
    impossible: int
    mean_micros: float
    results: list[QueryResult] = field(repr=False, default_factory=list)


def evaluate_queryset(model, queries: Sequence[Query]) -> QuerySetReport:
    """Mean over queries of log P(Q | E) / |Q|, with per-query timing.

    ``model`` is a circuit (exact answers) or any callable mapping a query
    to a log probability.
    """
    if not queries:
        raise DataError("empty query set")
    if isinstance(model, ArithmeticCircuit):
        circuit = model
        answer: Callable[[Query], float] = lambda q: query_conditional(circuit, q)
    else:
        answer = model
    results = []
    for i, q in enumerate(queries):
        if not q.query:
            raise DataError(f"query {i} has no query variables")
        t0 = time.perf_counter()
        try:
            lp = answer(q)
        except ImpossibleEvidenceError:
            results.append(QueryResult(i, None, None, (time.perf_counter() - t0) * 1e6, True))
            continue
        results.append(QueryResult(i, lp, lp / len(q.query), (time.perf_counter() - t0) * 1e6))
    ok = [r for r in results if not r.impossible]
    mean = float(np.mean([r.per_var for r in ok])) if ok else float("nan")
    micros = float(np.mean([r.micros for r in results]))
    return QuerySetReport(mean, len(ok), len(results) - len(ok), micros, results)


def write_queries(queries: Sequence[Query], path):
    atomic_write(path, "".join(q.format() + "\n" for q in queries))


def read_queries(path) -> list[Query]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(Query.parse(line))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return out
