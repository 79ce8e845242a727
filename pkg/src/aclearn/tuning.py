"""Grid search over the edge and parameter penalties on a holdout split."""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

from .data import Dataset, split_dataset
from .errors import DataError
from .learner import LearnerConfig, LearnResult, learn


@dataclass(frozen=True)
class TuningGrid:
    k_e: tuple[float, ...]
    k_p: tuple[float, ...] = (0.0,)
    fraction: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "k_e", tuple(float(x) for x in self.k_e))
        object.__setattr__(self, "k_p", tuple(float(x) for x in self.k_p))
        if not self.k_e or not self.k_p:
            raise DataError("tuning grid must be nonempty")
        if not 0 < self.fraction < 1:
            raise DataError("validation split fraction must lie in (0, 1)")

    def cells(self) -> list[tuple[float, float]]:
        return list(itertools.product(self.k_e, self.k_p))


@dataclass
class CellResult:
    k_e: float
    k_p: float
    holdout_ll: float      # mean per example
    splits: int
    edges: int


@dataclass
class TuningResult:
    best: tuple[float, float]
    cells: list[CellResult]
    final: LearnResult


def _run_cell(args) -> CellResult:
    train, holdout, cfg = args
    res = learn(train, cfg)
    ll = res.bn.log_likelihood(holdout) / holdout.n_rows
    return CellResult(cfg.k_e, cfg.k_p, ll, len(res.trace), res.circuit.n_edges)


def tune(data: Dataset, grid: TuningGrid, base: LearnerConfig | None = None, seed: int = 0,
         workers: int = 1) -> TuningResult:
    """Train each cell on the split's training part, keep the best holdout LL, retrain on everything.

    Ties go to the earlier cell in grid order.
    """
    base = base or LearnerConfig()
    train, holdout = split_dataset(data, grid.fraction, seed)
    if train.n_rows == 0 or holdout.n_rows == 0:
        raise DataError("too few rows for a training/validation split")
    jobs = [(train, holdout, replace(base, k_e=k_e, k_p=k_p)) for k_e, k_p in grid.cells()]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(j) for j in jobs]
    best = max(range(len(cells)), key=lambda i: (cells[i].holdout_ll, -i))
    k_e, k_p = cells[best].k_e, cells[best].k_p
    final = learn(data, replace(base, k_e=k_e, k_p=k_p))
    return TuningResult((k_e, k_p), cells, final)


def parse_grid(values: str) -> Sequence[float]:
    try:
        out = [float(x) for x in values.split(",") if x.strip()]
    except ValueError:
        raise DataError(f"bad grid values {values!r}") from None
    if not out:
        raise DataError("empty grid")
    return out
