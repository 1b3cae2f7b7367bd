"""Sobol-MDA importance from projected trees.

Projecting a tree along feature j removes its splits on j. A point then lies in
every leaf whose box is consistent with its other coordinates, and the cells of
the projected partition are the sets of points reaching the same leaf set. Cell
outputs are recomputed as the mean in-bag training response of the cell.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import _kernels as K
from .cart import RegressionTree
from .dataset import Dataset
from .forest import RandomForest
from .report import ViReport


@lru_cache(maxsize=8)
def _leaf_keys(size: int) -> np.ndarray:
    keys = np.random.Generator(np.random.Philox(0x5EED)).integers(0, 2**64, size=size, dtype=np.uint64, endpoint=False)
    keys.setflags(write=False)
    return keys


def _keys_for(tree: RegressionTree) -> np.ndarray:
    size = 1 << max(10, int(tree.n_nodes - 1).bit_length())
    return _leaf_keys(size)


class _CellTable:
    """Training-response means of the projected cells of one tree."""

    def __init__(self, tree: RegressionTree, X: np.ndarray, y: np.ndarray, rows: np.ndarray, dropped: int):
        self.tree, self.dropped = tree, dropped
        Xr = np.ascontiguousarray(X[rows])
        h = K.project_signatures(tree.feature, tree.threshold, tree.left, tree.right, Xr, dropped, _keys_for(tree))
        order = np.argsort(h, kind="stable")
        hs = h[order]
        self.hashes, starts = np.unique(hs, return_index=True)
        ys = y[rows][order]
        self.means = np.add.reduceat(ys, starts) / np.diff(np.append(starts, hs.size))

    def predict(self, Xq: np.ndarray) -> np.ndarray:
        t = self.tree
        Xq = np.ascontiguousarray(Xq)
        h = K.project_signatures(t.feature, t.threshold, t.left, t.right, Xq, self.dropped, _keys_for(t))
        pos = np.minimum(np.searchsorted(self.hashes, h), self.hashes.size - 1)
        hit = self.hashes[pos] == h
        out = np.where(hit, self.means[pos], 0.0)
        if not hit.all():
            # no in-bag row shares the cell: fall back to the union of the reached leaves
            miss = ~hit
            out[miss] = K.project_rows(t.feature, t.threshold, t.left, t.right, t.value, t.count,
                                       np.ascontiguousarray(Xq[miss]), self.dropped)
        return out


class ProjectedForestView:
    """Read-only projection of ``base`` along ``dropped_feature``.

    ``data`` must be the training data of ``base``. Cell means are memoised per
    tree, keyed by the sorted tuple of reached leaves.
    """

    def __init__(self, base: RandomForest, data: Dataset, dropped_feature: int):
        if not 0 <= dropped_feature < base.n_features:
            raise IndexError(f"feature index {dropped_feature} out of range")
        self.base = base
        self.data = data
        self.dropped_feature = dropped_feature
        self.recomputed_cell_means: list[dict[tuple, float]] = [{} for _ in base.trees]
        self._tables: dict[int, _CellTable] = {}

    def _table(self, h: int) -> _CellTable:
        if h not in self._tables:
            self._tables[h] = _CellTable(self.base.trees[h], self.data.features, self.data.response,
                                         self.base.bootstrap_rows[h], self.dropped_feature)
        return self._tables[h]

    def leaves(self, tree_index: int, x) -> np.ndarray:
        t = self.base.trees[tree_index]
        return K.project_leaves(t.feature, t.threshold, t.left, t.right, np.asarray(x, dtype=np.float64),
                                self.dropped_feature)

    def predict(self, tree_index: int, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.base.n_features:
            raise ValueError(f"expected a vector of length {self.base.n_features}")
        t = self.base.trees[tree_index]
        if not (t.feature == self.dropped_feature).any():
            return float(t.predict(x)[0])
        key = tuple(int(i) for i in self.leaves(tree_index, x))
        cache = self.recomputed_cell_means[tree_index]
        if key not in cache:
            cache[key] = float(self._table(tree_index).predict(x[None, :])[0])
        return cache[key]

    def predict_rows(self, tree_index: int, X) -> np.ndarray:
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        t = self.base.trees[tree_index]
        if not (t.feature == self.dropped_feature).any():
            return t.predict(X)
        return self._table(tree_index).predict(X)


def project_predict(view: ProjectedForestView, tree_index: int, x) -> float:
    return view.predict(tree_index, x)


def sobol_mda_vi(forest: RandomForest, data: Dataset, aggregate: str = "forest") -> ViReport:
    """(OOB MSE of the projected forest - OOB MSE of the forest) / Var(Y).

    ``aggregate="forest"`` compares the OOB forest predictions (each row averaged
    over the trees it is out of bag for). ``aggregate="tree"`` averages per-tree
    OOB MSE differences instead. Var(Y) is the training response variance with
    denominator n - 1. A feature no tree splits on scores exactly 0.
    """
    if aggregate not in ("forest", "tree"):
        raise ValueError(f"aggregate must be 'forest' or 'tree', got {aggregate!r}")
    if data.n < 2:
        raise ValueError("need at least two rows to estimate the response variance")
    var_y = float(np.var(data.response, ddof=1))
    if var_y <= 0:
        raise ValueError("response has zero variance")
    X, y = data.features, data.response
    p = data.p
    base_sum = np.zeros(data.n)
    proj_sum = np.zeros((p, data.n))
    hits = np.zeros(data.n)
    tree_sums = np.zeros(p)
    used = 0
    for tree, boot, oob in zip(forest.trees, forest.bootstrap_rows, forest.oob_rows):
        if oob.size == 0:
            continue
        used += 1
        Xo = np.ascontiguousarray(X[oob])
        yo = y[oob]
        base = tree.predict(Xo)
        base_sum[oob] += base
        hits[oob] += 1
        split_on = set(np.unique(tree.feature[tree.feature >= 0]).tolist())
        base_mse = np.mean((yo - base) ** 2)
        for j in range(p):
            if j in split_on:
                pred = _CellTable(tree, X, y, boot, j).predict(Xo)
                tree_sums[j] += np.mean((yo - pred) ** 2) - base_mse
            else:
                pred = base
            proj_sum[j, oob] += pred
    if used == 0:
        raise ValueError("every tree has an empty out-of-bag set")
    if aggregate == "tree":
        scores = tree_sums / used
    else:
        seen = hits > 0
        ys = y[seen]
        base_mse = np.mean((ys - base_sum[seen] / hits[seen]) ** 2)
        scores = np.array([np.mean((ys - proj_sum[j, seen] / hits[seen]) ** 2) - base_mse for j in range(p)])
    return ViReport.from_scores("SOBOL_MDA", scores / var_y, feature_names=data.feature_names)
