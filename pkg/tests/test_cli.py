import csv
import json
import re
from pathlib import Path

import numpy as np
import pytest

from riskmarket.apps import Dataset
from riskmarket.cli import main
from riskmarket.config import ConfigError, build_market, parse_config, preset_config, presets
from riskmarket.duality import analytic_log_pool
from riskmarket.pricing import LMSRCost


def read_summary(prefix):
    with open(f"{prefix}.summary.json") as fh:
        return json.load(fh)


def read_trace(prefix):
    with open(f"{prefix}.trace.csv") as fh:
        return list(csv.DictReader(fh))


def write_config(tmp_path, cfg, name="m.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


OPINION_CFG = {
    "name": "three",
    "agents": [
        {"risk": {"family": "entropic", "theta": 1.0, "belief": [0.7, 0.3]}},
        {"risk": {"family": "entropic", "theta": 2.0, "belief": [0.2, 0.8]}},
        {"risk": {"family": "entropic", "theta": 0.5, "belief": [0.6, 0.4]}},
    ],
    "cost": {"family": "lmsr", "theta0": 1.0},
}


def test_presets_listed(capsys):
    assert main(["presets"]) == 0
    names = capsys.readouterr().out.split()
    assert names == presets()
    assert set(names) == {"opinion_pool_fig1", "opinion_pool_fig2", "gaussian_map", "logistic_cd", "logistic_gd"}


def test_gaussian_preset(tmp_path):
    out = tmp_path / "g"
    assert main(["run", "--preset", "gaussian_map", "--out", str(out)]) == 0
    s = read_summary(out)
    assert s["converged"]
    assert s["final_price"][0] == pytest.approx(0.5, abs=1e-12)
    assert abs(s["duality_gap"]) <= 1e-12


def test_logistic_presets_agree(tmp_path):
    assert main(["run", "--preset", "logistic_cd", "--out", str(tmp_path / "cd")]) == 0
    assert main(["run", "--preset", "logistic_gd", "--out", str(tmp_path / "gd")]) == 0
    cd, gd = read_summary(tmp_path / "cd"), read_summary(tmp_path / "gd")
    assert cd["final_objective"] == pytest.approx(gd["final_objective"], abs=1e-6)
    assert cd["duality_gap"] is None


def test_config_run_and_trace(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--config", write_config(tmp_path, OPINION_CFG), "--out", str(out)]) == 0
    s = read_summary(out)
    rows = read_trace(out)
    assert len(rows) == s["rounds"]
    assert list(rows[0]) == [
        "t", "agent", "delta_1", "delta_2", "cost_paid", "objective",
        "price_1", "price_2", "mean_price_1", "mean_price_2",
    ]
    pool = analytic_log_pool([[0.7, 0.3], [0.2, 0.8], [0.6, 0.4]], [1.0, 2.0, 0.5], 1.0)
    np.testing.assert_allclose(s["final_price"], pool, atol=1e-6)
    # recompute the objective from the cumulative trades alone
    c = LMSRCost(1.0)
    risks = [
        lambda s_: np.log(0.7 * np.exp(-s_[0]) + 0.3 * np.exp(-s_[1])),
        lambda s_: np.log(0.2 * np.exp(-2 * s_[0]) + 0.8 * np.exp(-2 * s_[1])) / 2,
        lambda s_: np.log(0.6 * np.exp(-0.5 * s_[0]) + 0.4 * np.exp(-0.5 * s_[1])) / 0.5,
    ]
    holdings = np.zeros((3, 2))
    for row in rows:
        holdings[int(row["agent"])] += [float(row["delta_1"]), float(row["delta_2"])]
        L = c.cost(holdings.sum(axis=0)) + sum(r(h) for r, h in zip(risks, holdings))
        assert float(row["objective"]) == pytest.approx(L, abs=1e-9)
        np.testing.assert_allclose([float(row["price_1"]), float(row["price_2"])], c.price(holdings.sum(axis=0)),
                                   atol=1e-12)


def test_repeat_runs_are_byte_identical(tmp_path):
    cfg = dict(OPINION_CFG, queue={"policy": "random"})
    path = write_config(tmp_path, cfg)
    for name in ("a", "b"):
        assert main(["run", "--config", path, "--out", str(tmp_path / name), "--seed", "7"]) == 0
    assert (tmp_path / "a.trace.csv").read_bytes() == (tmp_path / "b.trace.csv").read_bytes()
    assert main(["run", "--config", path, "--out", str(tmp_path / "c"), "--seed", "8"]) == 0
    assert (tmp_path / "a.trace.csv").read_bytes() != (tmp_path / "c.trace.csv").read_bytes()


def test_malformed_config_names_the_field(tmp_path, capsys):
    bad = json.loads(json.dumps(OPINION_CFG))
    bad["agents"][1]["risk"]["theta"] = -1.0
    assert main(["run", "--config", write_config(tmp_path, bad), "--out", str(tmp_path / "x")]) == 1
    err = capsys.readouterr().err
    assert "agents.1" in err and "theta" in err
    assert not (tmp_path / "x.trace.csv").exists()


@pytest.mark.parametrize(
    "patch",
    [
        {"cost": {"family": "lmsr", "theta0": 1.0, "extra": 1}},
        {"agents": []},
        {"basis": {"matrix": [[1.0, 1.0], [2.0, 2.0]]}},
        {"agents": [{"risk": {"family": "var", "alpha": 0.9, "belief": [0.5, 0.5]}}]},
        {"agents": [{"risk": {"family": "entropic", "theta": 1.0, "belief": [0.5, 0.6]}}]},
    ],
)
def test_invalid_configs(tmp_path, patch):
    assert main(["run", "--config", write_config(tmp_path, dict(OPINION_CFG, **patch)), "--out",
                 str(tmp_path / "x")]) == 1


def test_missing_and_unparseable_files(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "x")]) == 1
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["run", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "x")]) == 1


def test_round_limit_gives_exit_2(tmp_path):
    out = tmp_path / "short"
    assert main(["run", "--config", write_config(tmp_path, OPINION_CFG), "--out", str(out), "--max-rounds", "2"]) == 2
    assert len(read_trace(out)) == 2
    assert read_summary(out)["converged"] is False


def test_logistic_config_with_csv(tmp_path):
    Dataset.synthetic(30, 2, seed=1).to_csv(tmp_path / "data.csv")
    cfg = {
        "basis": "linear",
        "agents": [
            {"risk": {"family": "quadratic", "scale": 0.1}, "mode": "gradient_step", "mask": [True, False]},
            {"risk": {"family": "quadratic", "scale": 0.1}, "mode": "gradient_step", "mask": [False, True]},
        ],
        "cost": {"family": "logistic", "data": "data.csv"},
    }
    sub = tmp_path / "cfg"
    sub.mkdir()
    (sub / "data.csv").write_bytes((tmp_path / "data.csv").read_bytes())
    assert main(["run", "--config", write_config(sub, cfg), "--out", str(tmp_path / "lr")]) == 0
    assert len(read_summary(tmp_path / "lr")["final_inventory"]) == 2


def test_build_market_from_parsed_config():
    market = build_market(parse_config(OPINION_CFG))
    assert market.n_securities == 2 and len(market.agents) == 3
    with pytest.raises(ConfigError):
        preset_config("nope")


def test_readme_config_example_runs(tmp_path):
    readme = (Path(__file__).parents[1] / "README.md").read_text()
    block = re.search(r"```json\n(.*?)```", readme, re.S).group(1)
    path = write_config(tmp_path, json.loads(block))
    assert main(["run", "--config", path, "--out", str(tmp_path / "readme")]) == 0
