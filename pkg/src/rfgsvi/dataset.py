"""Tabular data model, CSV ingestion and fold assignment."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import RngSeed


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable n x p feature matrix with a response vector.

    Rows are never reordered; subsets are taken with :meth:`take`.
    """

    features: np.ndarray
    response: np.ndarray
    feature_names: tuple[str, ...]
    response_name: str = "y"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.response, dtype=np.float64)
        if X.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {X.shape}")
        if y.ndim != 1:
            raise DataError(f"response must be 1-d, got shape {y.shape}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DataError(f"dataset must have n >= 1 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise DataError(f"response length {y.shape[0]} does not match {n} feature rows")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise DataError("dataset contains NaN or infinite values")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != p:
            raise DataError(f"expected {p} feature names, got {len(names)}")
        if len(set(names)) != p:
            raise DataError("feature names must be unique")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "response", _frozen(y))
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_arrays(cls, X, y, feature_names: Sequence[str] | None = None, response_name: str = "y"):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if feature_names is None:
            feature_names = [f"X{j + 1}" for j in range(X.shape[1])]
        return cls(X, np.asarray(y, dtype=np.float64), tuple(feature_names), response_name)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> Dataset:
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.response[rows], self.feature_names, self.response_name)

    def select(self, columns) -> Dataset:
        columns = list(columns)
        return Dataset(
            self.features[:, columns],
            self.response,
            tuple(self.feature_names[j] for j in columns),
            self.response_name,
        )


def load_csv(path, response_column: str, delimiter: str = ",") -> Dataset:
    """Read a headed numeric CSV; every column except ``response_column`` is a feature."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if response_column not in header:
            raise DataError(f"{path}: response column {response_column!r} not in header {header}")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(record)} fields, expected {len(header)}")
            values = []
            for col, cell in zip(header, record):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: non-numeric cell {cell!r} at row {lineno}, column {col!r}") from None
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: table has a header but no data rows")
    table = np.array(rows, dtype=np.float64)
    if not np.isfinite(table).all():
        bad_row, bad_col = np.argwhere(~np.isfinite(table))[0]
        raise DataError(f"{path}: missing or non-finite value at row {bad_row + 2}, column {header[bad_col]!r}")
    r = header.index(response_column)
    keep = [j for j in range(len(header)) if j != r]
    if not keep:
        raise DataError(f"{path}: no feature columns besides the response")
    return Dataset(table[:, keep], table[:, r], tuple(header[j] for j in keep), response_column)


def write_csv(data: Dataset, path, delimiter: str = ",") -> None:
    """Write ``data`` so that :func:`load_csv` reads it back exactly (17 significant digits)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow([*data.feature_names, data.response_name])
        for x, y in zip(data.features, data.response):
            w.writerow([format(v, ".17g") for v in x] + [format(y, ".17g")])


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_of: np.ndarray
    k: int

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.k)


def make_folds(n: int, k: int, rng: RngSeed) -> FoldAssignment:
    """Random balanced k-fold partition of ``range(n)`` (unstratified)."""
    if k < 1:
        raise ValueError(f"fold count must be >= 1, got {k}")
    if k > n:
        raise ValueError(f"fold count {k} exceeds row count {n}")
    order = rng.generator().permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[order] = np.arange(n) % k
    fold_of.setflags(write=False)
    return FoldAssignment(fold_of, k)
