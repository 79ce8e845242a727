"""Greedy arithmetic-circuit learning with an edge and parameter penalty.

Each iteration picks the valid split with the best score gain

    likelihood gain - k_e * edge cost - k_p * parameter delta

and applies it to the network and the circuit together.  Likelihood gains
are computed once per candidate.  Edge costs are cached and only marked
stale when an applied split copies or rewires a node the candidate's cost
depends on.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

from .bn import BayesianNetwork, Split
from .circuit import ArithmeticCircuit, build_initial_circuit
from .data import Dataset
from .errors import DataError, InternalError
from .splitting import edge_cost_dry_run, find_mutual_ancestors, split_ac

log = logging.getLogger(__name__)

MODES = ("greedy", "quick")


@dataclass
class LearnerConfig:
    k_e: float = 0.1
    k_p: float = 0.0
    mode: str = "greedy"
    max_splits: int | None = None
    max_seconds: float | None = None
    estimator: str = "laplace"
    seed: int = 0
    early_abort: bool = True

    def __post_init__(self):
        if self.k_e < 0 or self.k_p < 0:
            raise DataError("penalties must be non-negative")
        if self.mode not in MODES:
            raise DataError(f"mode must be one of {MODES}")


@dataclass(eq=False)
class SplitCandidate:
    leaf: int
    var: int
    target: int
    gain: float
    param_delta: int
    order: int
    edge_cost: int | None = None
    stale: bool = True
    aborted: bool = False
    footprint: frozenset = field(default_factory=frozenset, repr=False)
    copy_footprint: frozenset = field(default_factory=frozenset, repr=False)

    @property
    def split(self) -> Split:
        return Split(self.leaf, self.var)

    def score_gain(self, k_e: float, k_p: float) -> float:
        if self.edge_cost is None:
            raise InternalError("candidate has no edge cost yet")
        return self.gain - k_e * self.edge_cost - k_p * self.param_delta


@dataclass
class TraceRecord:
    iteration: int
    target: int
    leaf: int
    leaf_path: list
    split_var: int
    gain: float
    edge_cost: int
    param_delta: int
    score_gain: float
    n_e: int
    n_p: int
    ll: float
    score: float
    cost_computations: int
    stale_recomputes: int
    candidates: int
    seconds: float

    def to_json(self, with_time: bool = True) -> str:
        rec = asdict(self)
        if not with_time:
            rec.pop("seconds")
        return json.dumps(rec, sort_keys=True)


@dataclass
class LearnResult:
    circuit: ArithmeticCircuit
    bn: BayesianNetwork
    trace: list[TraceRecord]
    initial_edges: int
    initial_score: float
    stop_reason: str
    cost_computations: int = 0
    stale_recomputes: int = 0

    @property
    def final_score(self) -> float:
        return self.trace[-1].score if self.trace else self.initial_score


def score(ll: float, n_edges: int, n_params: int, k_e: float, k_p: float) -> float:
    """log P(T|C) - k_e * n_e(C) - k_p * n_p(C)."""
    return ll - k_e * n_edges - k_p * n_params


class Learner:
    """Holds the circuit, the network and the candidate set across iterations."""

    def __init__(self, data: Dataset, config: LearnerConfig | None = None):
        if data.n_rows == 0:
            raise DataError("cannot learn from an empty dataset")
        self.config = config or LearnerConfig()
        self.data = data
        self.bn = BayesianNetwork.empty(data.arities, data, self.config.estimator)
        leaves = [tree.root for tree in self.bn.trees]
        self.circuit = build_initial_circuit([leaf.theta for leaf in leaves], [leaf.id for leaf in leaves])
        self.ll = self.bn.training_log_likelihood()
        self.candidates: list[SplitCandidate] = []
        self._order = 0
        self.cost_computations = 0
        self.stale_recomputes = 0
        self.total_cost_computations = 0
        self.total_stale_recomputes = 0
        self.trace: list[TraceRecord] = []
        self.initial_edges = self.circuit.n_edges
        for leaf in leaves:
            self._add_candidates(leaf.id)
        self._sort()

    # -- candidates ---------------------------------------------------

    def _add_candidates(self, leaf_id: int):
        leaf = self.bn.leaves[leaf_id]
        a_t = self.bn.arities[leaf.var]
        for v in self.bn.valid_split_vars(leaf_id):
            split = Split(leaf_id, v)
            gain = self.bn.likelihood_gain(split, self.data)
            self.candidates.append(SplitCandidate(leaf_id, v, leaf.var, gain,
                                                  self.bn.arities[v] * a_t - a_t, self._order))
            self._order += 1

    def _sort(self):
        self.candidates.sort(key=lambda c: (-c.gain, c.order))

    def current_score(self) -> float:
        cfg = self.config
        return score(self.ll, self.circuit.n_edges, self.circuit.n_params, cfg.k_e, cfg.k_p)

    def compute_cost(self, cand: SplitCandidate, allow_abort: bool = True):
        """Fresh edge cost for ``cand`` against the current circuit."""
        cfg = self.config
        analysis = find_mutual_ancestors(self.circuit, cand.leaf, cand.var)
        limit = None
        if allow_abort and cfg.early_abort and cfg.k_e > 0:
            # beyond this cost the score gain is negative
            limit = (cand.gain - cfg.k_p * cand.param_delta) / cfg.k_e
        result = edge_cost_dry_run(self.circuit, cand.split, analysis, abort_above=limit)
        if result.param_delta != cand.param_delta and not result.aborted:
            raise InternalError(f"parameter delta {result.param_delta} != {cand.param_delta}")
        if cand.edge_cost is not None:
            self.stale_recomputes += 1
            self.total_stale_recomputes += 1
        self.cost_computations += 1
        self.total_cost_computations += 1
        cand.edge_cost = result.edge_cost
        cand.aborted = result.aborted
        cand.stale = False
        cand.footprint = analysis.footprint()
        cand.copy_footprint = analysis.copy_footprint()

    def _beats(self, cand, value, best, best_value) -> bool:
        if best is None:
            return value > 0
        return value > best_value or (value == best_value and cand.order < best.order)

    def select_greedy(self) -> SplitCandidate | None:
        """Exact argmax of score gain, visiting candidates by decreasing likelihood gain."""
        cfg = self.config
        best, best_value = None, 0.0
        for cand in self.candidates:
            if cand.gain < best_value or (best is None and cand.gain <= 0):
                break
            if cand.edge_cost is None or cand.stale:
                self.compute_cost(cand)
            value = cand.score_gain(cfg.k_e, cfg.k_p)
            if self._beats(cand, value, best, best_value):
                best, best_value = cand, value
        return best

    def select_quick(self) -> SplitCandidate | None:
        """Like greedy, but stale costs are trusted unless the candidate would win."""
        cfg = self.config
        best, best_value = None, 0.0
        for cand in self.candidates:
            if cand.gain < best_value or (best is None and cand.gain <= 0):
                break
            if cand.edge_cost is None:
                self.compute_cost(cand)
            value = cand.score_gain(cfg.k_e, cfg.k_p)
            if not self._beats(cand, value, best, best_value):
                continue
            if cand.stale:
                self.compute_cost(cand)
                value = cand.score_gain(cfg.k_e, cfg.k_p)
                if not self._beats(cand, value, best, best_value):
                    continue
            best, best_value = cand, value
        return best

    def select(self) -> SplitCandidate | None:
        return self.select_greedy() if self.config.mode == "greedy" else self.select_quick()

    # -- iteration ----------------------------------------------------

    def step(self) -> TraceRecord | None:
        """Choose and apply one split; None once no split improves the score."""
        start = time.perf_counter()
        self.cost_computations = 0
        self.stale_recomputes = 0
        cand = self.select()
        if cand is None:
            return None
        if cand.stale or cand.aborted:
            raise InternalError("selected candidate has no fresh edge cost")
        cfg = self.config
        before = self.current_score()
        split = cand.split
        leaf = self.bn.leaves[cand.leaf]
        leaf_path = [list(p) for p in leaf.path]
        analysis = find_mutual_ancestors(self.circuit, split.leaf, split.var)
        new_leaves = self.bn.apply_split(split, self.data)
        outcome = split_ac(self.circuit, split, new_leaves, analysis)
        if outcome.edge_delta != cand.edge_cost:
            raise InternalError(f"edge cost {cand.edge_cost} but the split added {outcome.edge_delta}")
        if outcome.param_delta != cand.param_delta:
            raise InternalError(f"parameter delta {cand.param_delta} but the split added {outcome.param_delta}")
        self.ll += cand.gain
        after = self.current_score()
        if not after > before:
            raise InternalError("accepted split did not improve the score")
        self._refresh(cand, new_leaves, outcome.changed, outcome.copied)
        rec = TraceRecord(
            iteration=len(self.trace) + 1, target=cand.target, leaf=cand.leaf, leaf_path=leaf_path,
            split_var=cand.var, gain=cand.gain, edge_cost=cand.edge_cost, param_delta=cand.param_delta,
            score_gain=cand.score_gain(cfg.k_e, cfg.k_p), n_e=self.circuit.n_edges,
            n_p=self.circuit.n_params, ll=self.ll, score=after,
            cost_computations=self.cost_computations, stale_recomputes=self.stale_recomputes,
            candidates=len(self.candidates), seconds=time.perf_counter() - start,
        )
        self.trace.append(rec)
        return rec

    def invalidate(self, changed: set[int], copied: set[int] = frozenset()) -> list[SplitCandidate]:
        """Mark candidates whose cost footprint touches a changed node."""
        marked = []
        for c in self.candidates:
            if c.edge_cost is None or c.stale:
                continue
            if not c.footprint.isdisjoint(changed) or not c.copy_footprint.isdisjoint(copied):
                c.stale = True
                marked.append(c)
        return marked

    def _refresh(self, applied: SplitCandidate, new_leaves, changed: set[int], copied: set[int]):
        bn = self.bn
        self.candidates = [c for c in self.candidates
                           if c.leaf != applied.leaf and bn.is_valid_split(c.split)]
        self.invalidate(changed, copied)
        for leaf in new_leaves:
            self._add_candidates(leaf.id)
        self._sort()

    def run(self) -> LearnResult:
        cfg = self.config
        start = time.perf_counter()
        initial_score = self.current_score()
        reason = "converged"
        while True:
            if cfg.max_splits is not None and len(self.trace) >= cfg.max_splits:
                reason = "max_splits"
                break
            if cfg.max_seconds is not None and time.perf_counter() - start > cfg.max_seconds:
                reason = "max_seconds"
                break
            rec = self.step()
            if rec is None:
                break
            log.debug("iteration %d: split leaf %d on %d, score %.4f", rec.iteration, rec.leaf,
                      rec.split_var, rec.score)
        return LearnResult(self.circuit, self.bn, self.trace, self.initial_edges, initial_score, reason,
                           self.total_cost_computations, self.total_stale_recomputes)


def learn(data: Dataset, config: LearnerConfig | None = None) -> LearnResult:
    return Learner(data, config).run()


def exhaustive_best(learner: Learner) -> tuple[float, SplitCandidate | None]:
    """Max score gain over every candidate with freshly computed costs (test oracle)."""
    cfg = learner.config
    best, best_value = None, 0.0
    for cand in sorted(learner.candidates, key=lambda c: c.order):
        res = edge_cost_dry_run(learner.circuit, cand.split)
        value = cand.gain - cfg.k_e * res.edge_cost - cfg.k_p * cand.param_delta
        if value > best_value:
            best, best_value = cand, value
    return best_value, best
