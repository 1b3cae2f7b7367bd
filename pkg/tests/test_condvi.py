import numpy as np
import pytest

from rfgsvi.condvi import build_grid, cf_vi, quantile_bins, select_conditioning_set
from rfgsvi.dataset import Dataset
from rfgsvi.forest import ForestParams, fit_forest, rf_vi_mda
from rfgsvi.rng import RngSeed


def _correlated(n=400, seed=0):
    gen = np.random.default_rng(seed)
    x1 = gen.normal(size=n)
    x2 = x1 + 0.5 * gen.normal(size=n)
    x3 = gen.normal(size=n)
    y = x1 + x3 + gen.normal(scale=0.3, size=n)
    return Dataset.from_arrays(np.column_stack([x1, x2, x3, np.ones(n)]), y)


def test_conditioning_set_by_correlation():
    d = _correlated()
    assert select_conditioning_set(d, 0) == (1,)
    assert select_conditioning_set(d, 2) == ()
    assert select_conditioning_set(d, 3) == ()
    assert select_conditioning_set(d, 0, threshold=0.99) == ()
    with pytest.raises(IndexError):
        select_conditioning_set(d, 4)


def test_quantile_bins_are_balanced():
    x = np.random.default_rng(1).normal(size=1000)
    counts = np.bincount(quantile_bins(x, 4))
    assert counts.tolist() == [250] * 4
    assert np.all(quantile_bins(x, 1) == 0)
    with pytest.raises(ValueError):
        quantile_bins(x, 0)


def test_grid_partitions_rows():
    d = _correlated()
    grid = build_grid(d, 0, (1, 2), bins_per_var=3)
    assert grid.n_cells <= 9
    cells = grid.cells
    assert sum(c.size for c in cells) == d.n
    assert np.array_equal(np.sort(np.concatenate(cells)), np.arange(d.n))
    with pytest.raises(ValueError):
        build_grid(d, 0, (0, 1))


@pytest.mark.parametrize("aggregate", ["forest", "tree"])
def test_empty_conditioning_set_equals_mda(aggregate):
    d = _correlated()
    f = fit_forest(d, ForestParams(n_trees=20), RngSeed(0))
    cf = cf_vi(f, d, threshold=1.0, rng=RngSeed(4), aggregate=aggregate)
    mda = rf_vi_mda(f, d, RngSeed(4), aggregate)
    assert np.array_equal(cf.scores, mda.scores)
    assert cf.extra["conditioning_sets"] == [[], [], [], []]


def test_conditioning_shrinks_importance_of_a_proxy():
    d = _correlated(2000, seed=3)
    f = fit_forest(d, ForestParams(n_trees=50), RngSeed(0))
    cf = cf_vi(f, d, rng=RngSeed(1))
    mda = rf_vi_mda(f, d, RngSeed(1))
    assert cf.scores[1] < mda.scores[1]
    assert cf.scores[3] == 0.0 and mda.scores[3] == 0.0


def test_condition_on_all():
    d = _correlated()
    f = fit_forest(d, ForestParams(n_trees=5), RngSeed(0))
    cf = cf_vi(f, d, rng=RngSeed(1), condition_on_all=True)
    assert cf.extra["conditioning_sets"][0] == [1, 2, 3]
