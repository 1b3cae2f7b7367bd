"""CART regression trees with surrogate splits, cost-complexity pruning and CART importance."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .dataset import Dataset
from .report import ViReport
from .rng import RngSeed

MAX_SURROGATES = 5


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float  # rows with x[feature] <= threshold go left


@dataclass(frozen=True)
class SurrogateSplit:
    split: Split
    agreement: float
    flipped: bool
    dev_reduction: float


@dataclass(eq=False)
class RegressionTree:
    """Flat-array binary regression tree.

    Node 0 is the root; ``feature[t] == -1`` marks a leaf. ``value`` holds node
    means of the training response and ``count`` the number of training rows
    (bootstrap duplicates included) that reached each node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    deviance: np.ndarray
    surrogate_feature: np.ndarray
    surrogate_threshold: np.ndarray
    surrogate_flipped: np.ndarray
    surrogate_agreement: np.ndarray
    surrogate_dev: np.ndarray
    n_features: int
    min_node: int = 5
    training_mse: float = 0.0
    single_leaf: bool = field(default=False)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    @property
    def dev_reduction(self) -> np.ndarray:
        """Parent deviance minus children deviance at internal nodes, 0 at leaves."""
        out = np.zeros(self.n_nodes)
        internal = np.flatnonzero(~self.is_leaf)
        red = self.deviance[internal] - self.deviance[self.left[internal]] - self.deviance[self.right[internal]]
        out[internal] = np.maximum(red, 0.0)
        return out

    @property
    def default_left(self) -> np.ndarray:
        """Majority direction of each internal node (ties go left)."""
        out = np.ones(self.n_nodes, dtype=bool)
        internal = ~self.is_leaf
        out[internal] = self.count[self.left[internal]] >= self.count[self.right[internal]]
        return out

    def split(self, node: int) -> Split | None:
        if self.feature[node] < 0:
            return None
        return Split(int(self.feature[node]), float(self.threshold[node]))

    def surrogates(self, node: int) -> list[SurrogateSplit]:
        out = []
        for s in range(self.surrogate_feature.shape[1]):
            k = int(self.surrogate_feature[node, s])
            if k < 0:
                break
            out.append(SurrogateSplit(
                Split(k, float(self.surrogate_threshold[node, s])),
                float(self.surrogate_agreement[node, s]),
                bool(self.surrogate_flipped[node, s]),
                float(self.surrogate_dev[node, s]),
            ))
        return out

    def apply(self, X, available=None) -> np.ndarray:
        """Leaf index of each row; ``available`` masks features that may be read."""
        X = _check_matrix(X, self.n_features)
        if available is None:
            available = np.ones(self.n_features, dtype=bool)
        return K.apply_rows(self.feature, self.threshold, self.left, self.right, self.default_left,
                            self.surrogate_feature, self.surrogate_threshold, self.surrogate_flipped,
                            X, np.asarray(available, dtype=bool))

    def predict(self, X, available=None) -> np.ndarray:
        X = _check_matrix(X, self.n_features)
        if available is None:
            return K.predict_rows(self.feature, self.threshold, self.left, self.right, self.value, X)
        return self.value[self.apply(X, available)]

    def to_dict(self) -> dict:
        def node(t):
            if self.feature[t] < 0:
                return {"mean": float(self.value[t]), "count": int(self.count[t]),
                        "deviance": float(self.deviance[t])}
            return {
                "feature": int(self.feature[t]),
                "threshold": float(self.threshold[t]),
                "surrogates": [
                    {"feature": s.split.feature, "threshold": s.split.threshold,
                     "agreement": s.agreement, "flipped": s.flipped, "dev_reduction": s.dev_reduction}
                    for s in self.surrogates(t)
                ],
                "mean": float(self.value[t]),
                "count": int(self.count[t]),
                "deviance": float(self.deviance[t]),
                "dev_reduction": float(self.dev_reduction[t]),
                "left": node(self.left[t]),
                "right": node(self.right[t]),
            }

        return {"n_features": self.n_features, "min_node": self.min_node,
                "max_surrogates": int(self.surrogate_feature.shape[1]),
                "training_mse": self.training_mse, "root": node(0)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> RegressionTree:
        # Re-create the node numbering used by the grower: children are allocated
        # together when their parent is expanded, left subtree expanded first.
        n_surr = int(doc["max_surrogates"])
        nodes = [doc["root"]]
        stack = [0]
        left, right = {0: -1}, {0: -1}
        while stack:
            t = stack.pop()
            d = nodes[t]
            if "feature" in d:
                lc, rc = len(nodes), len(nodes) + 1
                nodes += [d["left"], d["right"]]
                left[t], right[t] = lc, rc
                left[lc] = right[lc] = left[rc] = right[rc] = -1
                stack += [rc, lc]
        m = len(nodes)
        feature = np.full(m, -1, np.int64)
        threshold = np.zeros(m)
        sf = np.full((m, n_surr), -1, np.int64)
        st = np.zeros((m, n_surr))
        sfl = np.zeros((m, n_surr), bool)
        sa = np.zeros((m, n_surr))
        sd = np.zeros((m, n_surr))
        for t, d in enumerate(nodes):
            if "feature" in d:
                feature[t] = d["feature"]
                threshold[t] = d["threshold"]
                for s, sur in enumerate(d["surrogates"]):
                    sf[t, s], st[t, s] = sur["feature"], sur["threshold"]
                    sfl[t, s], sa[t, s], sd[t, s] = sur["flipped"], sur["agreement"], sur["dev_reduction"]
        return cls(
            feature, threshold,
            np.array([left[t] for t in range(m)], np.int64),
            np.array([right[t] for t in range(m)], np.int64),
            np.array([d["mean"] for d in nodes], np.float64),
            np.array([d["count"] for d in nodes], np.int64),
            np.array([d["deviance"] for d in nodes], np.float64),
            sf, st, sfl, sa, sd,
            n_features=int(doc["n_features"]), min_node=int(doc["min_node"]),
            training_mse=float(doc["training_mse"]), single_leaf=m == 1,
        )

    @classmethod
    def from_json(cls, text: str) -> RegressionTree:
        return cls.from_dict(json.loads(text))


def _check_matrix(X, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != p:
        raise ValueError(f"expected rows of length {p}, got shape {X.shape}")
    return np.ascontiguousarray(X)


def _from_kernel(out, n_features, min_node, n_rows) -> RegressionTree:
    feature, threshold, left, right, value, count, deviance, sf, st, sfl, sa, sd = out
    leaves = feature < 0
    mse = float(deviance[leaves].sum() / n_rows)
    return RegressionTree(feature, threshold, left, right, value, count, deviance, sf, st, sfl, sa, sd,
                          n_features=n_features, min_node=min_node, training_mse=mse,
                          single_leaf=feature.shape[0] == 1)


def grow_from_rows(X: np.ndarray, y: np.ndarray, rows: np.ndarray, *, min_node: int = 5,
                   max_depth: int | None = None, allowed: np.ndarray | None = None,
                   mtry: int | None = None, rand: np.ndarray | None = None,
                   max_surrogates: int = MAX_SURROGATES) -> RegressionTree:
    """Low-level grower shared by :func:`grow_tree` and the forest."""
    p = X.shape[1]
    if allowed is None:
        allowed = np.arange(p, dtype=np.int64)
    allowed = np.asarray(allowed, dtype=np.int64)
    if mtry is None or mtry >= allowed.size:
        mtry = allowed.size
        rand = np.zeros((1, p))
    out = K.grow(X, y, np.asarray(rows, dtype=np.int64), allowed, int(mtry), int(min_node),
                 -1 if max_depth is None else int(max_depth), rand, int(max_surrogates))
    return _from_kernel(out, p, min_node, len(rows))


def grow_tree(data: Dataset, min_node: int = 5, max_depth: int | None = None,
              candidate_features=None, rng: RngSeed | None = None,
              max_surrogates: int = MAX_SURROGATES) -> RegressionTree:
    """Grow a CART regression tree by exhaustive midpoint search.

    Each node takes the split minimising summed child deviance over the candidate
    features (ties: lowest feature index, then smallest threshold); every leaf has
    at least ``min_node`` rows. Growth is deterministic and ``rng`` is unused.
    """
    del rng
    if candidate_features is None:
        allowed = np.arange(data.p, dtype=np.int64)
    else:
        allowed = np.unique(np.asarray(list(candidate_features), dtype=np.int64))
        if allowed.size == 0:
            raise ValueError("candidate feature set is empty")
        if allowed[0] < 0 or allowed[-1] >= data.p:
            raise ValueError(f"candidate features must lie in [0, {data.p})")
    if min_node < 1:
        raise ValueError("min_node must be >= 1")
    return grow_from_rows(data.features, data.response, np.arange(data.n), min_node=min_node,
                          max_depth=max_depth, allowed=allowed, max_surrogates=max_surrogates)


def predict_tree(tree: RegressionTree, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != tree.n_features:
        raise ValueError(f"expected a vector of length {tree.n_features}, got shape {x.shape}")
    return float(tree.predict(x[None, :])[0])


def _subtree(tree: RegressionTree, collapsed: np.ndarray) -> RegressionTree:
    """Copy of ``tree`` where every node with ``collapsed[t]`` becomes a leaf."""
    order = []
    stack = [0]
    new_id = {0: 0}
    pairs = []
    next_id = 1
    while stack:
        t = stack.pop()
        order.append(t)
        if tree.feature[t] >= 0 and not collapsed[t]:
            lc, rc = int(tree.left[t]), int(tree.right[t])
            new_id[lc], new_id[rc] = next_id, next_id + 1
            next_id += 2
            pairs.append(t)
            stack += [rc, lc]
    old = np.empty(next_id, np.int64)
    for t, i in new_id.items():
        old[i] = t
    keep_internal = np.array([tree.feature[t] >= 0 and not collapsed[t] for t in old])
    feature = np.where(keep_internal, tree.feature[old], -1)
    left = np.full(next_id, -1, np.int64)
    right = np.full(next_id, -1, np.int64)
    for t in pairs:
        left[new_id[t]] = new_id[int(tree.left[t])]
        right[new_id[t]] = new_id[int(tree.right[t])]
    sf = tree.surrogate_feature[old].copy()
    sf[~keep_internal] = -1
    leaves = feature < 0
    n_rows = int(tree.count[0])
    return RegressionTree(
        feature.astype(np.int64), np.where(keep_internal, tree.threshold[old], 0.0), left, right,
        tree.value[old].copy(), tree.count[old].copy(), tree.deviance[old].copy(),
        sf, tree.surrogate_threshold[old].copy(), tree.surrogate_flipped[old].copy(),
        tree.surrogate_agreement[old].copy(), tree.surrogate_dev[old].copy(),
        n_features=tree.n_features, min_node=tree.min_node,
        training_mse=float(tree.deviance[old][leaves].sum() / n_rows), single_leaf=next_id == 1,
    )


def pruning_sequence(tree: RegressionTree) -> list[RegressionTree]:
    """Nested subtrees from weakest-link pruning, largest first, root leaf last."""
    n = tree.n_nodes
    collapsed = np.zeros(n, dtype=bool)
    seq = [tree]
    parent = np.full(n, -1, np.int64)
    internal = np.flatnonzero(tree.feature >= 0)
    parent[tree.left[internal]] = internal
    parent[tree.right[internal]] = internal
    # postorder so children are summarised before parents
    post = []
    stack = [0]
    while stack:
        t = stack.pop()
        post.append(t)
        if tree.feature[t] >= 0:
            stack += [int(tree.left[t]), int(tree.right[t])]
    post.reverse()
    while True:
        leaf_dev = np.zeros(n)
        n_leaf = np.zeros(n, np.int64)
        active = np.zeros(n, dtype=bool)
        for t in reversed(post):
            active[t] = t == 0 or (active[parent[t]] and not collapsed[parent[t]])
        for t in post:
            if not active[t]:
                continue
            if tree.feature[t] < 0 or collapsed[t]:
                leaf_dev[t] = tree.deviance[t]
                n_leaf[t] = 1
            else:
                leaf_dev[t] = leaf_dev[tree.left[t]] + leaf_dev[tree.right[t]]
                n_leaf[t] = n_leaf[tree.left[t]] + n_leaf[tree.right[t]]
        cand = np.flatnonzero(active & (tree.feature >= 0) & ~collapsed)
        if cand.size == 0:
            break
        g = (tree.deviance[cand] - leaf_dev[cand]) / (n_leaf[cand] - 1)
        g_min = g.min()
        weakest = cand[g <= g_min + 1e-12 * max(1.0, abs(g_min))]
        collapsed[weakest] = True
        seq.append(_subtree(tree, collapsed))
    return seq


def prune_cost_complexity(tree: RegressionTree, data_test: Dataset) -> RegressionTree:
    """Subtree of the weakest-link sequence with the lowest test-set MSE.

    Ties go to the smaller subtree.
    """
    if data_test.n == 0:
        raise ValueError("test set is empty")
    best, best_mse = tree, np.inf
    for sub in pruning_sequence(tree):
        mse = float(np.mean((data_test.response - sub.predict(data_test.features)) ** 2))
        if mse <= best_mse:
            best, best_mse = sub, mse
    return best


def cart_vi(tree: RegressionTree, feature_names=None) -> ViReport:
    """CART importance: primary deviance decrease plus the best surrogate's decrease per node."""
    p = tree.n_features
    raw = np.zeros(p)
    red = tree.dev_reduction
    for t in np.flatnonzero(~tree.is_leaf):
        raw[tree.feature[t]] += red[t]
        best = {}
        for s in tree.surrogates(t):
            j = s.split.feature
            best[j] = max(best.get(j, 0.0), s.dev_reduction)
        for j, d in best.items():
            raw[j] += d
    return ViReport.from_scores("CART", raw, feature_names=feature_names, normalize=True)
