"""Random regression forests with out-of-bag bookkeeping and permutation importance (MDA)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .cart import RegressionTree, grow_from_rows
from .dataset import Dataset
from .report import ViReport
from .rng import RngSeed


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters.

    ``mtry`` is the number of features tried per node: ``None`` means
    ``max(1, p // 3)`` of the usable features, ``"all"`` means every usable one.
    """

    n_trees: int = 100
    mtry: int | str | None = None
    min_node: int = 5
    bootstrap: bool = True
    max_depth: int | None = None

    def resolve_mtry(self, p_active: int) -> int:
        if p_active < 1:
            return 0
        if self.mtry is None:
            return max(1, p_active // 3)
        if self.mtry == "all":
            return p_active
        m = int(self.mtry)
        if not 1 <= m:
            raise ValueError(f"mtry must be >= 1, got {m}")
        return min(m, p_active)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class RandomForest:
    trees: list[RegressionTree]
    bootstrap_rows: list[np.ndarray]
    oob_rows: list[np.ndarray]
    mtry: int
    params: ForestParams
    n_features: int
    n_train: int
    active_features: np.ndarray = field(default=None)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected rows of length {self.n_features}, got shape {X.shape}")
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / self.n_trees

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "mtry": self.mtry,
            "n_features": self.n_features,
            "n_train": self.n_train,
            "active_features": [int(j) for j in self.active_features],
            "trees": [t.to_dict() for t in self.trees],
            "bootstrap_rows": [[int(i) for i in b] for b in self.bootstrap_rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> RandomForest:
        d = json.loads(text)
        n = d["n_train"]
        boot = [np.array(b, dtype=np.int64) for b in d["bootstrap_rows"]]
        return cls(
            [RegressionTree.from_dict(t) for t in d["trees"]], boot, [_oob_from(b, n) for b in boot],
            d["mtry"], ForestParams(**d["params"]), d["n_features"], n,
            np.array(d["active_features"], dtype=np.int64),
        )


def _oob_from(boot: np.ndarray, n: int) -> np.ndarray:
    inbag = np.zeros(n, dtype=bool)
    inbag[boot] = True
    return np.flatnonzero(~inbag)


def fit_forest(data: Dataset, params: ForestParams = ForestParams(), rng: RngSeed = RngSeed(0),
               features=None) -> RandomForest:
    """Fit ``params.n_trees`` trees on bootstrap samples with per-node feature subsampling.

    ``features`` restricts the usable columns (default: all). Tree ``h`` draws its
    bootstrap sample and node feature keys from ``rng.child(h)``.
    """
    if params.n_trees < 1:
        raise ValueError(f"number of trees must be >= 1, got {params.n_trees}")
    active = np.arange(data.p, dtype=np.int64) if features is None else np.asarray(sorted(features), dtype=np.int64)
    if active.size and (active[0] < 0 or active[-1] >= data.p):
        raise ValueError(f"features must lie in [0, {data.p})")
    mtry = params.resolve_mtry(active.size)
    if active.size and not 1 <= mtry <= active.size:
        raise ValueError(f"mtry must lie in [1, {active.size}]")
    X, y, n = data.features, data.response, data.n
    trees, boots, oobs = [], [], []
    for h in range(params.n_trees):
        gen = rng.child(h).generator()
        rows = gen.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        rand = gen.random((2 * n + 1, data.p)) if mtry < active.size else None
        trees.append(grow_from_rows(X, y, rows, min_node=params.min_node, max_depth=params.max_depth,
                                    allowed=active, mtry=mtry, rand=rand, max_surrogates=0))
        boots.append(rows)
        oobs.append(_oob_from(rows, n))
    return RandomForest(trees, boots, oobs, mtry, params, data.p, n, active)


def predict_forest(forest: RandomForest, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != forest.n_features:
        raise ValueError(f"expected a vector of length {forest.n_features}, got shape {x.shape}")
    return float(forest.predict(x)[0])


def oob_predictions(forest: RandomForest, data: Dataset) -> np.ndarray:
    """Mean prediction of the trees that left each row out; NaN where no tree did."""
    total = np.zeros(data.n)
    hits = np.zeros(data.n, dtype=np.int64)
    for tree, oob in zip(forest.trees, forest.oob_rows):
        if oob.size:
            total[oob] += tree.predict(data.features[oob])
            hits[oob] += 1
    out = np.full(data.n, np.nan)
    seen = hits > 0
    out[seen] = total[seen] / hits[seen]
    return out


def oob_mse(forest: RandomForest, data: Dataset) -> float:
    pred = oob_predictions(forest, data)
    seen = ~np.isnan(pred)
    if not seen.any():
        raise ValueError("no row has an out-of-bag prediction")
    return float(np.mean((data.response[seen] - pred[seen]) ** 2))


def permute_within(values: np.ndarray, cells: np.ndarray | None, gen: np.random.Generator) -> np.ndarray:
    """Shuffle ``values`` independently inside each cell (one cell if ``cells`` is None).

    The permutation is drawn as one uniform key per entry; entries are re-ordered
    by key within their cell, so a single-cell call is a plain uniform shuffle.
    """
    keys = gen.random(values.shape[0])
    if cells is None:
        return values[np.argsort(keys, kind="stable")]
    src = np.lexsort((keys, cells))
    dst = np.argsort(cells, kind="stable")
    out = np.empty_like(values)
    out[dst] = values[src]
    return out


AGGREGATES = ("forest", "tree")


def _permutation_importance(forest: RandomForest, data: Dataset, rng: RngSeed, cells_for=None,
                            aggregate: str = "forest") -> np.ndarray:
    """Increase in OOB MSE after shuffling each feature, one fresh shuffle per (feature, tree).

    Each tree shuffles the column among its own OOB rows. ``aggregate="forest"``
    averages the shuffled tree predictions into permuted OOB forest predictions
    and compares their MSE with the OOB forest MSE. ``aggregate="tree"`` is the
    mean over trees of (permuted OOB MSE - OOB MSE).
    ``cells_for(j)`` optionally gives a per-row cell id used to restrict shuffles.
    """
    if aggregate not in AGGREGATES:
        raise ValueError(f"aggregate must be one of {AGGREGATES}, got {aggregate!r}")
    X, y = data.features, data.response
    n, p = data.n, data.p
    sums = np.zeros(p)
    base_sum = np.zeros(n)
    perm_sum = np.zeros((p, n))
    hits = np.zeros(n)
    used = 0
    cells = [None if cells_for is None else cells_for(j) for j in range(p)]
    for h, (tree, oob) in enumerate(zip(forest.trees, forest.oob_rows)):
        if oob.size == 0:
            continue
        used += 1
        Xo = X[oob]
        yo = y[oob]
        pred = tree.predict(Xo)
        base = np.mean((yo - pred) ** 2)
        base_sum[oob] += pred
        hits[oob] += 1
        for j in range(p):
            gen = rng.child(j, h).generator()
            c = None if cells[j] is None else cells[j][oob]
            Xp = Xo.copy()
            Xp[:, j] = permute_within(Xo[:, j], c, gen)
            pp = tree.predict(Xp)
            sums[j] += np.mean((yo - pp) ** 2) - base
            perm_sum[j, oob] += pp
    if used == 0:
        raise ValueError("every tree has an empty out-of-bag set")
    if aggregate == "tree":
        return sums / used
    seen = hits > 0
    ys = y[seen]
    base = np.mean((ys - base_sum[seen] / hits[seen]) ** 2)
    return np.array([np.mean((ys - perm_sum[j, seen] / hits[seen]) ** 2) - base for j in range(p)])


def rf_vi_mda(forest: RandomForest, data: Dataset, rng: RngSeed, aggregate: str = "forest") -> ViReport:
    """Permutation importance from OOB rows; larger means more important."""
    scores = _permutation_importance(forest, data, rng, aggregate=aggregate)
    return ViReport.from_scores("RF_MDA", scores, feature_names=data.feature_names)
