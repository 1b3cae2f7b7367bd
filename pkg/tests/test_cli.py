import json

import numpy as np
import pytest

from rfgsvi.cli import main, parse_methods
from rfgsvi.dataset import write_csv
from rfgsvi.rng import RngSeed
from rfgsvi.sim import DgpSpec, generate_dgp

SMALL = ["--n", "120", "--reps", "2", "--H", "10", "--gsa-L", "3", "--gsa-H", "5"]


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_gsa_check_additive(tmp_path, capsys):
    assert main(["gsa-check", "--fn", "additive", "--N", "10000", "--out", str(tmp_path), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert max(doc["first_order_abs_error"]) < 0.03
    assert max(doc["total_abs_error"]) < 0.03
    assert (tmp_path / "run_config.json").exists() and (tmp_path / "gsa_check_additive.json").exists()


def test_gsa_check_product(tmp_path, capsys):
    assert main(["gsa-check", "--fn", "product", "--out", str(tmp_path), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert np.allclose(doc["first_order"], [0, 0], atol=0.05)
    assert np.allclose(doc["total"], [1, 1], atol=0.05)


def test_gsa_check_constant_fails_cleanly(tmp_path, capsys):
    assert main(["gsa-check", "--fn", "constant", "--out", str(tmp_path)]) == 2
    assert "zero output variance" in capsys.readouterr().err
    assert (tmp_path / "INCOMPLETE").exists()


def test_gsa_check_unknown_fn(tmp_path, capsys):
    assert main(["gsa-check", "--fn", "rosenbrock", "--out", str(tmp_path)]) == 2
    assert "unknown test function" in capsys.readouterr().err


def test_unknown_scenario(tmp_path, capsys):
    assert main(["simulate", "--scenario", "9", "--out", str(tmp_path / "o")]) == 2
    assert "unknown scenario" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_parse_methods():
    assert parse_methods("all") == ["CART", "RF_MDA", "CF", "SOBOL_MDA", "RF_GS"]
    assert parse_methods("smda,cart") == ["CART", "SOBOL_MDA"]
    with pytest.raises(ValueError):
        parse_methods("lasso")


def test_simulate_single_cart_rep(tmp_path, capsys):
    assert main(["simulate", "--scenario", "1", "--reps", "1", "--methods", "cart", "--out", str(tmp_path),
                 "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    (s,) = doc["summaries"]
    assert s["method"] == "CART" and s["per_feature_sd"] == [0.0] * 4
    lines = (tmp_path / "scenario1_CART.csv").read_text().splitlines()
    assert lines[0] == "replication,feature,score" and len(lines) == 5


def test_simulate_rerun_is_bit_exact(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--scenario", "3", *SMALL, "--seed", "5", "--out", str(a), "--threads", "1"]) == 0
    assert main(["simulate", "--config", str(a / "run_config.json"), "--out", str(b), "--threads", "2"]) == 0
    assert _files(a) == _files(b)
    assert not (a / "INCOMPLETE").exists()
    summary = json.loads((a / "scenario3_summary.json").read_text())
    assert summary["config"] == json.loads((a / "run_config.json").read_text())
    assert "scenario 3" in capsys.readouterr().out


def test_config_command_mismatch(tmp_path):
    assert main(["gsa-check", "--out", str(tmp_path)]) == 0
    assert main(["simulate", "--config", str(tmp_path / "run_config.json"), "--out", str(tmp_path / "x")]) == 2


def test_analyze(tmp_path, capsys):
    data = tmp_path / "d.csv"
    write_csv(generate_dgp(DgpSpec(1, n=150), RngSeed(0)), data)
    out, again = tmp_path / "out", tmp_path / "again"
    args = ["--folds", "3", "--mc-reps", "2", "--H", "10", "--gsa-L", "3", "--gsa-H", "5"]
    assert main(["analyze", "--data", str(data), "--response", "y", *args, "--out", str(out), "--threads", "1"]) == 0
    assert main(["analyze", "--config", str(out / "run_config.json"), "--out", str(again), "--threads", "2"]) == 0
    assert _files(out) == _files(again)
    doc = json.loads((out / "analyze_summary.json").read_text())
    assert set(doc["methods"]) == {"CART", "RF_MDA", "CF", "SOBOL_MDA", "RF_GS"}
    dist = (out / "analyze_RF_GS_distribution.csv").read_text().splitlines()
    assert dist[0] == "replication,feature,score" and len(dist) == 1 + 2 * 4
    cart = (out / "cart_vi.csv").read_text().splitlines()
    assert cart[0] == "feature,mean_score,folds_used,absent"


def test_analyze_reports_absent_cart_feature(tmp_path, capsys):
    gen = np.random.default_rng(0)
    x = gen.normal(size=(100, 1))
    y = 3 * x[:, 0] + gen.normal(scale=0.1, size=100)
    data = tmp_path / "d.csv"
    data.write_text("a,junk,y\n" + "".join(f"{a:.17g},0,{b:.17g}\n" for a, b in zip(x[:, 0], y)))
    assert main(["analyze", "--data", str(data), "--response", "y", "--methods", "cart", "--out",
                 str(tmp_path / "o"), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["methods"]["CART"]["absent"] == ["junk"]
    assert doc["methods"]["CART"]["ranking"] == ["a"]


def test_analyze_errors(tmp_path, capsys):
    assert main(["analyze", "--out", str(tmp_path / "o")]) == 2
    assert main(["analyze", "--data", str(tmp_path / "nope.csv"), "--response", "y",
                 "--out", str(tmp_path / "o")]) == 2
    assert "no such file" in capsys.readouterr().err
