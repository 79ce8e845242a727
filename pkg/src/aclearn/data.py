"""Discrete datasets: loading, validation and train/holdout splitting."""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """Row-major matrix of value indices plus per-column arities."""

    values: np.ndarray
    arities: tuple[int, ...]

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.int64)
        if values.ndim != 2:
            raise DataError("dataset values must be a 2-d matrix")
        arities = tuple(int(a) for a in self.arities)
        if values.shape[1] != len(arities):
            raise DataError(f"{values.shape[1]} columns but {len(arities)} arities")
        if any(a < 2 for a in arities):
            raise DataError("every variable needs arity >= 2")
        if values.size:
            bad = (values < 0) | (values >= np.asarray(arities))
            if bad.any():
                row, col = map(int, np.argwhere(bad)[0])
                raise DataError(f"row {row}: value {values[row, col]} out of range for column {col}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "arities", arities)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    @property
    def density(self) -> float:
        """Fraction of non-zero cells."""
        if self.values.size == 0:
            return 0.0
        return float(np.count_nonzero(self.values)) / self.values.size

    def subset(self, rows) -> "Dataset":
        return Dataset(self.values[rows], self.arities)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(",".join(map(str, self.arities)).encode())
        h.update(self.values.astype("<i8").tobytes())
        return h.hexdigest()


def parse_dataset(text: str, source: str = "<string>") -> Dataset:
    lines = text.splitlines()
    header = None
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            fields = [int(x) for x in line.split(",")]
        except ValueError:
            raise DataError(f"{source}:{lineno}: non-integer field") from None
        if header is None:
            if any(a < 2 for a in fields):
                raise DataError(f"{source}:{lineno}: arities must be >= 2")
            header = fields
            continue
        if len(fields) != len(header):
            raise DataError(f"{source}:{lineno}: expected {len(header)} fields, got {len(fields)}")
        for col, (v, a) in enumerate(zip(fields, header)):
            if not 0 <= v < a:
                raise DataError(f"{source}:{lineno}: value {v} out of range for column {col} (arity {a})")
        rows.append(fields)
    if header is None:
        raise DataError(f"{source}: empty file")
    values = np.array(rows, dtype=np.int64).reshape(len(rows), len(header))
    return Dataset(values, tuple(header))


def load_dataset(path) -> Dataset:
    """Read a comma-separated file whose first line lists the arities."""
    path = Path(path)
    return parse_dataset(path.read_text(), source=str(path))


def format_dataset(data: Dataset) -> str:
    lines = [",".join(map(str, data.arities))]
    lines.extend(",".join(map(str, row)) for row in data.values.tolist())
    return "\n".join(lines) + "\n"


def save_dataset(data: Dataset, path):
    atomic_write(path, format_dataset(data))


def split_dataset(data: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffle rows deterministically and cut off the first ``fraction`` for training."""
    if not 0 < fraction < 1:
        raise DataError("split fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n_rows)
    cut = int(round(fraction * data.n_rows))
    return data.subset(np.sort(perm[:cut])), data.subset(np.sort(perm[cut:]))


def atomic_write(path, text: str):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def dataset_from_rows(rows: Sequence[Sequence[int]], arities: Sequence[int]) -> Dataset:
    return Dataset(np.asarray(rows, dtype=np.int64).reshape(len(rows), len(arities)), tuple(arities))
