import numpy as np
import pytest

from rfgsvi.report import ViReport
from rfgsvi.rng import RngSeed
from rfgsvi import sim
from rfgsvi.sim import DgpSpec, MethodParams, generate_dgp, rank_correct_first, run_monte_carlo
from rfgsvi.forest import ForestParams


def _partial_corr(a, b, Z):
    Z1 = np.column_stack([np.ones(len(a)), Z])
    ra = a - Z1 @ np.linalg.lstsq(Z1, a, rcond=None)[0]
    rb = b - Z1 @ np.linalg.lstsq(Z1, b, rcond=None)[0]
    return np.corrcoef(ra, rb)[0, 1]


def test_scenario1_moments():
    d = generate_dgp(DgpSpec(1, n=100_000), RngSeed(0))
    X, y = d.features, d.response
    # Var(Xj) = a^2 + 1, Cov(Xj, Xk) = a^2, Var(Y) = b^2 (3 * 10 + 6 * 9) + 1
    assert np.var(X[:, 1]) == pytest.approx(10, rel=0.03)
    assert np.cov(X[:, 1], X[:, 2])[0, 1] == pytest.approx(9, rel=0.03)
    assert np.var(y) == pytest.approx(757, rel=0.03)


def test_scenario2_conditional_independence():
    # z = r sqrt(n - 3) is approximately standard normal across independent draws
    z = []
    for seed in range(40):
        d = generate_dgp(DgpSpec(2, n=10_000), RngSeed(seed))
        X, y = d.features, d.response
        z.append(_partial_corr(y, X[:, 4], X[:, [2, 3]]) * np.sqrt(d.n - 3))
    z = np.array(z)
    assert abs(z.mean()) < 3 / np.sqrt(z.size)
    assert 0.7 < z.std(ddof=1) < 1.3


def test_scenario3_marginal_independence_and_ordering():
    spec = DgpSpec(3, n=10_000)
    rng = RngSeed(2)
    d = generate_dgp(spec, rng)
    X, y = d.features, d.response
    assert abs(np.corrcoef(X[:, 0], X[:, 2])[0, 1]) < 3 / np.sqrt(d.n)
    eps_y = rng.child("eps", "Y").generator().standard_normal(d.n)
    eps_4 = rng.child("eps", "X4").generator().standard_normal(d.n)
    assert np.allclose(y - 3 * X[:, 1] - 3 * X[:, 2], eps_y)
    assert np.allclose(X[:, 3] - 2 * X[:, 1] - 2 * y, eps_4)


def test_spec_validation():
    with pytest.raises(ValueError, match="unknown scenario"):
        DgpSpec(9)
    with pytest.raises(ValueError):
        DgpSpec(1, n=0)
    with pytest.raises(ValueError):
        DgpSpec(1, noise_sd=0.0)
    assert DgpSpec(2).p == 5 and DgpSpec(3).correct_set == {1, 2}


@pytest.mark.parametrize("scores, correct, expected", [
    ((1.8, 2.3, 2.1, 2.0), {1, 2, 3}, True),
    ((5, 1, 1, 1), {1, 2, 3}, False),
    ((2, 2, 1, 1), {1}, False),
])
def test_rank_correct_first(scores, correct, expected):
    assert rank_correct_first(ViReport.from_scores("CART", scores), correct) is expected


def test_rank_correct_first_rejects_empty_set():
    with pytest.raises(ValueError):
        rank_correct_first(ViReport.from_scores("CART", [1.0]), set())


FAST = MethodParams(forest=ForestParams(n_trees=10), gsa_L=4, gsa_forest=ForestParams(n_trees=5))


def test_single_replication_has_zero_sd():
    (s,) = run_monte_carlo(DgpSpec(1, n=100), ["CART"], 1, FAST, RngSeed(0))
    assert s.replications == 1 and np.all(s.per_feature_sd == 0)
    assert s.correct_first_proportion in (0.0, 1.0)


def test_replications_are_independent_of_order_and_workers():
    spec = DgpSpec(2, n=120)
    methods = ["RF_MDA", "SOBOL_MDA", "RF_GS"]
    serial = run_monte_carlo(spec, methods, 3, FAST, RngSeed(4))
    parallel = run_monte_carlo(spec, methods, 3, FAST, RngSeed(4), n_jobs=2)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.scores, b.scores)
    alone = sim._replicate(spec, methods, FAST, RngSeed(4), 2)
    assert np.array_equal(alone["RF_GS"], serial[2].scores[2])


def test_proportion_is_exact_mean_of_indicators():
    spec = DgpSpec(1, n=100)
    (s,) = run_monte_carlo(spec, ["RF_MDA"], 4, FAST, RngSeed(5))
    hits = [int(np.argmax(row)) in spec.correct_set for row in s.scores]
    assert s.correct_first_proportion == np.mean(hits)


def test_method_failure_aborts_with_replication(monkeypatch):
    def boom(*args, **kwargs):
        raise ValueError("bad fit")

    monkeypatch.setattr(sim, "cart_vi", boom)
    with pytest.raises(RuntimeError, match="replication 0 failed: bad fit"):
        run_monte_carlo(DgpSpec(1, n=50), ["CART"], 2, FAST, RngSeed(0))


def test_monte_carlo_argument_errors():
    with pytest.raises(ValueError):
        run_monte_carlo(DgpSpec(1), [], 1)
    with pytest.raises(ValueError):
        run_monte_carlo(DgpSpec(1), ["CART"], 0)


def test_method_params_round_trip():
    p = MethodParams(cf_bins=5, gsa_forest=ForestParams(n_trees=7))
    assert MethodParams.from_dict(p.to_dict()) == p
