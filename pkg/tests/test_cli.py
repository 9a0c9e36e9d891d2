import csv
import json
import os

import numpy as np
import pytest
import yaml

from serfsim import cli, report
from serfsim.config import load_config
from serfsim.data import write_dataset, build_dataset
from serfsim.econ import RiskProfile, compute_ce_curve, observed_samples, rank_treatments

from conftest import make_dataset

FAST = ["--taus", "0.2,0.5,0.8", "--n-boot", "5", "--draws", "10"]


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_validate_fixture(capsys):
    code, out, _ = run(["validate"], capsys)
    assert code == 0 and "768 records" in out


def test_fit_writes_models(tmp_path, capsys):
    code, out, err = run(["fit", "--out", str(tmp_path), *FAST], capsys)
    assert code == 0, err
    files = sorted(os.listdir(tmp_path / "models"))
    assert files == ["model_q0.20.json", "model_q0.50.json", "model_q0.80.json"]
    doc = json.loads((tmp_path / "models" / "model_q0.50.json").read_text())
    assert doc["n_obs"] == 752 and len(doc["standard_errors"]) == 10
    table = rows(tmp_path / "report" / "coefficients.csv")
    assert [r["regressor"] for r in table][:4] == ["const", "yield_lag", "bii", "t"]
    assert report.verify_manifest(tmp_path) == []


def test_missing_bii_exit_2(tmp_path, capsys):
    ds = make_dataset()
    trials, costs, bii = write_dataset(ds, tmp_path / "d")
    os.remove(bii)
    code, _, err = run(["fit", "--out", str(tmp_path / "o"), "--trials", trials, "--costs", costs, "--bii", bii], capsys)
    assert code == 2
    assert err.startswith("ERROR FileNotFoundError:") and "bii.csv" in err
    assert err.count("\n") == 1


def test_rank_deficient_exit_3(tmp_path, capsys):
    ds = make_dataset()
    flat = {t: 0.5 for t in ds.bii.entries}  # BII collinear with the intercept
    ds = build_dataset(ds.records, ds.costs, flat)
    paths = write_dataset(ds, tmp_path / "d")
    code, _, err = run(["fit", "--out", str(tmp_path / "o"), "--trials", paths[0], "--costs", paths[1],
                        "--bii", paths[2], "--n-boot", "0"], capsys)
    assert code == 3
    assert err.startswith("ERROR RankDeficientDesign:")


def test_rank_matches_econ(tmp_path, capsys, fixture_dataset):
    code, _, err = run(["rank", "--out", str(tmp_path), "--w0", "100000"], capsys)
    assert code == 0, err
    table = rows(tmp_path / "report" / "rankings.csv")
    profile = RiskProfile(w0=100000)
    curves = [compute_ce_curve(s, profile) for s in observed_samples(fixture_dataset)]
    for rac in (0.0, 2.0, 4.0):
        want = [e.treatment for e in rank_treatments(curves, rac)]
        got = [r["treatment"] for r in table if r["scenario_id"] == "observed_pooled" and float(r["rac"]) == rac]
        assert got == want
    scenarios = {r["scenario_id"] for r in table}
    assert scenarios == {"observed_2014-15", "observed_2015-16", "observed_pooled"}
    dom = rows(tmp_path / "report" / "dominance.csv")
    assert len(dom) == 3 * 2 * 6


def test_rank_zero_grid_orders_by_mean(tmp_path, capsys, fixture_dataset):
    code, _, err = run(["rank", "--out", str(tmp_path), "--rac-min", "0", "--rac-max", "0", "--rac-step", "1"], capsys)
    assert code == 0, err
    pooled = [r for r in rows(tmp_path / "report" / "rankings.csv") if r["scenario_id"] == "observed_pooled"]
    means = {s.treatment: s.profits.mean() for s in observed_samples(fixture_dataset)}
    assert [r["treatment"] for r in pooled] == sorted(means, key=lambda t: -means[t])


def test_rank_w0_guidance(tmp_path, capsys):
    code, _, err = run(["rank", "--out", str(tmp_path), "--w0", "0"], capsys)
    assert code == 2
    assert err.startswith("ERROR NonPositiveWealthAdjustedProfit:") and "set w0 >" in err


def test_rank_single_treatment(tmp_path, capsys):
    ds = make_dataset(treatments=("Control",))
    paths = write_dataset(ds, tmp_path / "d")
    code, _, err = run(["rank", "--out", str(tmp_path / "o"), "--trials", paths[0], "--costs", paths[1],
                        "--bii", paths[2], "--w0", "1000"], capsys)
    assert code == 0, err
    assert {r["rank"] for r in rows(tmp_path / "o" / "report" / "rankings.csv")} == {"1"}


def test_simulate_default_grid(tmp_path, capsys):
    code, _, err = run(["simulate", "--out", str(tmp_path), "--draws", "10", "--price-override", "11.5",
                        "--price-override", "30"], capsys)
    assert code == 0, err
    ids = {r["scenario_id"] for r in rows(tmp_path / "report" / "sim_ce_curves.csv")}
    assert len(ids) == 27
    assert "bii-high_q0.8_p30" in ids and "bii-low_q0.2" in ids
    profits = rows(tmp_path / "report" / "sim_profits.csv")
    assert len(profits) == 27 * 4 * 10
    draws = rows(tmp_path / "report" / "sim_draws.csv")
    assert len(draws) == 27 * 4 * 10 * 24


def test_default_config_is_nine_scenarios(tmp_path, capsys):
    code, _, err = run(["simulate", "--out", str(tmp_path / "o"), "--draws", "5"], capsys)
    assert code == 0, err
    assert len({r["scenario_id"] for r in rows(tmp_path / "o" / "report" / "sim_ce_curves.csv")}) == 9
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"simulation": {"price_override": [30.0], "n_draws": 5}}))
    code, _, err = run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "p")], capsys)
    assert code == 0, err
    assert len({r["scenario_id"] for r in rows(tmp_path / "p" / "report" / "sim_ce_curves.csv")}) == 18


def test_simulate_fitted_requires_models(tmp_path, capsys):
    code, _, err = run(["simulate", "--out", str(tmp_path), "--model-source", "fitted"], capsys)
    assert code == 2 and "ConfigError" in err and "fit" in err


def test_simulate_fitted_models(tmp_path, capsys):
    assert run(["fit", "--out", str(tmp_path), *FAST], capsys)[0] == 0
    code, _, err = run(["simulate", "--out", str(tmp_path), "--model-source", "fitted", "--draws", "5"], capsys)
    assert code == 0, err


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("rac: {step: 0}\n")
    assert run(["rank", "--config", str(bad)], capsys)[0] == 2
    bad.write_text("nonsense_key: 1\n")
    code, _, err = run(["rank", "--config", str(bad)], capsys)
    assert code == 2 and "nonsense_key" in err
    code, _, err = run(["simulate", "--out", str(tmp_path), "--draws", "0"], capsys)
    assert code == 2 and "n_draws" in err
    with pytest.raises(SystemExit):
        cli.main(["rank", "--convention", "weird"])


def test_config_echo_excludes_out_and_reproduces(tmp_path, capsys):
    args = ["run-all", *FAST, "--seed", "5"]
    assert run([*args, "--out", str(tmp_path / "a")], capsys)[0] == 0
    echo = yaml.safe_load((tmp_path / "a" / "config.yaml").read_text())
    assert "out" not in echo and echo["seed"] == 5 and echo["taus"] == [0.2, 0.5, 0.8]
    code, _, err = run(["run-all", "--config", str(tmp_path / "a" / "config.yaml"), "--out", str(tmp_path / "b")], capsys)
    assert code == 0, err
    ma = (tmp_path / "a" / "report" / "manifest.json").read_bytes()
    mb = (tmp_path / "b" / "report" / "manifest.json").read_bytes()
    assert ma == mb


def test_paper_literal_flag(tmp_path, capsys):
    code, _, err = run(["rank", "--out", str(tmp_path), "--convention", "paper-literal", "--w0", "100000"], capsys)
    assert code == 0, err
    assert load_config(None, {"convention": "paper-literal"}).convention == "paper_literal"
    assert "paper-literal" in (tmp_path / "config.yaml").read_text()
