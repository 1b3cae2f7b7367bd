import numpy as np
import pytest

from rfgsvi.report import ViReport, rank_scores


def test_ranking_is_stable_descending():
    assert rank_scores([1.0, 3.0, 3.0, 2.0]).tolist() == [1, 2, 3, 0]


def test_normalization_and_round_trip():
    r = ViReport.from_scores("CART", [2.0, 4.0, 0.0], feature_names=["a", "b", "c"], normalize=True)
    assert r.normalized.tolist() == [50.0, 100.0, 0.0]
    back = ViReport.from_json(r.to_json())
    assert np.array_equal(back.scores, r.scores) and back.names == ("a", "b", "c")
    assert np.array_equal(back.ranking, [1, 0, 2])


def test_csv_layout():
    r = ViReport.from_scores("RF_GS", [0.1, 0.3])
    assert r.to_csv().splitlines() == ["feature,score,rank", "X1,0.1,2", "X2,0.3,1"]


def test_unknown_tag():
    with pytest.raises(ValueError):
        ViReport.from_scores("LASSO", [1.0])
