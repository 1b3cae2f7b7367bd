"""Conditional permutation importance: shuffles restricted to cells of a grid over correlated features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .forest import RandomForest, _permutation_importance
from .report import ViReport
from .rng import RngSeed


@dataclass(frozen=True, eq=False)
class ConditioningGrid:
    target: int
    z_features: tuple[int, ...]
    cell_of: np.ndarray

    @property
    def cells(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.cell_of == c) for c in range(self.n_cells)]

    @property
    def n_cells(self) -> int:
        return int(self.cell_of.max()) + 1 if self.cell_of.size else 0


def _abs_corr(X: np.ndarray, j: int) -> np.ndarray:
    Xc = X - X.mean(axis=0)
    ss = np.sqrt((Xc**2).sum(axis=0))
    out = np.zeros(X.shape[1])
    ok = ss > 0
    if ss[j] == 0:
        return out
    out[ok] = np.abs(Xc[:, ok].T @ Xc[:, j]) / (ss[ok] * ss[j])
    return out


def select_conditioning_set(data: Dataset, j: int, threshold: float = 0.2) -> tuple[int, ...]:
    """Features whose absolute Pearson correlation with feature ``j`` exceeds ``threshold``.

    Constant columns have correlation 0 and are never selected.
    """
    if not 0 <= j < data.p:
        raise IndexError(f"feature index {j} out of range for p={data.p}")
    r = _abs_corr(data.features, j)
    return tuple(int(k) for k in np.flatnonzero(r > threshold) if k != j)


def quantile_bins(x: np.ndarray, bins: int) -> np.ndarray:
    """Bin index in [0, bins) from the empirical quantiles of ``x``."""
    if bins < 1:
        raise ValueError(f"bins_per_var must be >= 1, got {bins}")
    if bins == 1:
        return np.zeros(x.shape[0], dtype=np.int64)
    edges = np.quantile(x, np.arange(1, bins) / bins)
    return np.searchsorted(edges, x, side="right").astype(np.int64)


def build_grid(data: Dataset, j: int, z, bins_per_var: int = 4) -> ConditioningGrid:
    """Intersect per-variable quantile bins of the conditioning features; empty cells are dropped."""
    if bins_per_var < 1:
        raise ValueError(f"bins_per_var must be >= 1, got {bins_per_var}")
    z = tuple(sorted(int(k) for k in z))
    if j in z:
        raise ValueError("conditioning set must exclude the target feature")
    code = np.zeros(data.n, dtype=np.int64)
    for k in z:
        code = code * bins_per_var + quantile_bins(data.features[:, k], bins_per_var)
    _, cell_of = np.unique(code, return_inverse=True)
    cell_of = cell_of.astype(np.int64).reshape(-1)
    cell_of.setflags(write=False)
    return ConditioningGrid(j, z, cell_of)


def cf_vi(forest: RandomForest, data: Dataset, threshold: float = 0.2, bins_per_var: int = 4,
          rng: RngSeed = RngSeed(0), condition_on_all: bool = False, aggregate: str = "forest") -> ViReport:
    """Permutation importance with each shuffle of feature j confined to grid cells over Z(j).

    With ``condition_on_all`` Z(j) is every other feature instead of the
    correlation-thresholded set. An empty Z gives exactly :func:`rf_vi_mda`
    under the same ``rng`` and ``aggregate``.
    """
    grids = []
    for j in range(data.p):
        if condition_on_all:
            z = tuple(k for k in range(data.p) if k != j)
        else:
            z = select_conditioning_set(data, j, threshold)
        grids.append(build_grid(data, j, z, bins_per_var) if z else None)

    def cells_for(j):
        return None if grids[j] is None else grids[j].cell_of

    scores = _permutation_importance(forest, data, rng, cells_for, aggregate)
    extra = {"conditioning_sets": [list(g.z_features) if g is not None else [] for g in grids]}
    return ViReport.from_scores("CF", scores, feature_names=data.feature_names, extra=extra)
