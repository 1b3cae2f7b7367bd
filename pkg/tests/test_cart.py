import numpy as np
import pytest

from rfgsvi.cart import (RegressionTree, cart_vi, grow_tree, predict_tree, pruning_sequence,
                         prune_cost_complexity)
from rfgsvi.dataset import Dataset


def _brute_root_split(X, y, min_node):
    best = (np.inf, None, None)
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = (a + b) / 2
            left = X[:, j] <= thr
            if left.sum() < min_node or (~left).sum() < min_node:
                continue
            sse = ((y[left] - y[left].mean()) ** 2).sum() + ((y[~left] - y[~left].mean()) ** 2).sum()
            if best[1] is None or sse < best[0] - 1e-9 * max(1.0, best[0]):
                best = (sse, j, thr)
    return best


def test_step_function():
    x = np.arange(10.0)
    y = np.where(x < 5, 0.0, 10.0)
    tree = grow_tree(Dataset.from_arrays(x, y))
    assert tree.split(0).feature == 0 and tree.split(0).threshold == 4.5
    assert tree.n_leaves == 2
    assert predict_tree(tree, [2.0]) == 0.0 and predict_tree(tree, [7.0]) == 10.0


def test_constant_response_is_single_leaf():
    tree = grow_tree(Dataset.from_arrays(np.random.default_rng(0).normal(size=(30, 2)), np.full(30, 4.0)))
    assert tree.single_leaf and tree.n_nodes == 1
    assert predict_tree(tree, [0.0, 0.0]) == 4.0
    assert np.all(cart_vi(tree).scores == 0)


@pytest.mark.parametrize("seed", range(5))
def test_root_split_matches_brute_force(seed):
    gen = np.random.default_rng(seed)
    X = np.round(gen.normal(size=(40, 3)), 1)
    y = X[:, 1] + gen.normal(size=40)
    tree = grow_tree(Dataset.from_arrays(X, y))
    sse, j, thr = _brute_root_split(X, y, 5)
    assert tree.split(0).feature == j
    assert tree.split(0).threshold == pytest.approx(thr)


def test_leaves_respect_min_node(noisy):
    for m in (1, 5, 20):
        tree = grow_tree(noisy, min_node=m)
        assert tree.count[tree.is_leaf].min() >= m


def test_deviance_is_additive(noisy):
    tree = grow_tree(noisy)
    root_dev = ((noisy.response - noisy.response.mean()) ** 2).sum()
    assert tree.deviance[0] == pytest.approx(root_dev)
    assert tree.deviance[tree.is_leaf].sum() + tree.dev_reduction.sum() == pytest.approx(root_dev)
    assert tree.training_mse == pytest.approx(tree.deviance[tree.is_leaf].sum() / noisy.n)


def test_duplicate_feature_tie_break_and_surrogate():
    gen = np.random.default_rng(1)
    x = gen.normal(size=60)
    y = (x > 0) * 5.0 + gen.normal(scale=0.1, size=60)
    tree = grow_tree(Dataset.from_arrays(np.column_stack([x, x]), y))
    assert tree.split(0).feature == 0
    surr = tree.surrogates(0)
    assert surr[0].split.feature == 1 and surr[0].agreement == 1.0 and not surr[0].flipped
    vi = cart_vi(tree)
    assert vi.scores[0] == pytest.approx(vi.scores[1])
    assert vi.normalized.max() == 100.0


def test_surrogate_routing_when_primary_unavailable():
    gen = np.random.default_rng(2)
    x = gen.normal(size=80)
    X = np.column_stack([x, -x + gen.normal(scale=1e-3, size=80)])
    y = np.sin(2 * x) + gen.normal(scale=0.05, size=80)
    tree = grow_tree(Dataset.from_arrays(X, y))
    full = tree.predict(X)
    only_second = tree.predict(X, available=np.array([False, True]))
    assert np.mean(full == only_second) > 0.9


def test_pruning_sequence_is_nested(noisy):
    tree = grow_tree(noisy)
    seq = pruning_sequence(tree)
    leaves = [t.n_leaves for t in seq]
    assert leaves[0] == tree.n_leaves and leaves[-1] == 1
    assert all(a > b for a, b in zip(leaves, leaves[1:]))
    # each subtree's training error is no smaller than the previous one
    mses = [t.training_mse for t in seq]
    assert all(b >= a - 1e-12 for a, b in zip(mses, mses[1:]))


def test_pruning_on_noise_helps():
    gen = np.random.default_rng(3)
    train = Dataset.from_arrays(gen.normal(size=(300, 2)), gen.normal(size=300))
    test = Dataset.from_arrays(gen.normal(size=(300, 2)), gen.normal(size=300))
    tree = grow_tree(train)
    pruned = prune_cost_complexity(tree, test)

    def mse(t):
        return np.mean((test.response - t.predict(test.features)) ** 2)

    assert pruned.n_leaves <= tree.n_leaves
    assert mse(pruned) <= mse(tree)


def test_prune_single_leaf_unchanged():
    d = Dataset.from_arrays(np.arange(6.0), np.ones(6))
    tree = grow_tree(d)
    assert prune_cost_complexity(tree, d).n_nodes == 1


def test_json_round_trip(noisy):
    tree = grow_tree(noisy, max_depth=4)
    back = RegressionTree.from_json(tree.to_json())
    assert np.array_equal(back.predict(noisy.features), tree.predict(noisy.features))
    assert np.array_equal(back.feature, tree.feature)
    assert np.allclose(cart_vi(back).scores, cart_vi(tree).scores)


def test_candidate_features_and_errors(noisy):
    tree = grow_tree(noisy, candidate_features=[2])
    assert set(tree.feature[tree.feature >= 0]) <= {2}
    with pytest.raises(ValueError):
        grow_tree(noisy, candidate_features=[])
    with pytest.raises(ValueError):
        grow_tree(noisy, min_node=0)
    with pytest.raises(ValueError):
        predict_tree(tree, [1.0])
