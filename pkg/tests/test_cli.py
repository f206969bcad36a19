import csv
import json
import math

import pytest

from kkt_tracker.cli import ConfigError, main, validate_config

QUAD = {"scenario": "quadratic-tracking", "T": 200, "params": {"alpha": 0.2, "eta": 1.0, "epsilon": 1.0},
        "certificates": {"delta": 1.0, "t_grid_count": 5}}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_minimal_config_is_valid():
    cfg = validate_config({"scenario": "quadratic-tracking", "T": 1000,
                           "params": {"alpha": 0.04, "eta": 75000, "epsilon": 1e-5}})
    assert cfg.seed == 0 and cfg.certificates["inflation"] == 1.1


@pytest.mark.parametrize("raw,field", [
    ({"scenario": "quadratic-tracking", "T": 10, "params": {"alpha": 0.1, "eta": 1, "epsilon": 0}},
     "params.epsilon"),
    ({"scenario": "quadratic-tracking", "T": 10, "params": {"alpha": 0.1, "eta": 1, "epsilon": -1}},
     "params.epsilon"),
    ({"T": 10}, "scenario"),
    ({"scenario": "quadratic-tracking"}, "T"),
    ({"scenario": "quadratic-tracking", "T": 10, "colour": 1}, "colour"),
    ({"scenario": "quadratic-tracking", "T": 10, "params": {"gamma": 1}}, "params.gamma"),
    ({"scenario": "keepout-disk", "T": 10, "scenario_params": {"foo": 1}}, "scenario_params.foo"),
    ({"scenario": "quadratic-tracking", "T": 10, "seed": -3}, "seed"),
])
def test_config_errors_name_field(raw, field):
    with pytest.raises(ConfigError) as exc:
        validate_config(raw)
    assert str(exc.value).startswith(field + ":")


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, {"scenario": "quadratic-tracking", "T": 10,
                           "params": {"alpha": 0.1, "eta": 1, "epsilon": 0}})
    assert main(["track", "--config", bad, "--out", str(tmp_path / "o")]) == 2
    assert "params.epsilon" in capsys.readouterr().err
    assert main(["track", "--config", write(tmp_path, {"T": 10}, "b.json"), "--out", str(tmp_path)]) == 2
    assert main(["track", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "broken.json").write_text("{\n  'x': 1\n}")
    assert main(["track", "--config", str(tmp_path / "broken.json")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_numerical_failure_exit_1(tmp_path):
    cfg = {"scenario": "keepout-disk", "T": 200, "params": {"alpha": 5.0, "eta": 1.0, "epsilon": 0.01}}
    assert main(["track", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1


def test_scenarios_command(capsys):
    assert main(["scenarios"]) == 0
    out = capsys.readouterr().out
    for name in ("quadratic-tracking", "keepout-disk", "feeder-surrogate"):
        assert name in out


def _all_finite(obj):
    if isinstance(obj, dict):
        return all(_all_finite(v) for v in obj.values())
    if isinstance(obj, list):
        return all(_all_finite(v) for v in obj)
    if isinstance(obj, float):
        return math.isfinite(obj)
    return True


def test_track_quadratic(tmp_path):
    out = tmp_path / "o"
    assert main(["track", "--config", write(tmp_path, QUAD), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "trajectory.csv")))
    assert list(rows[0]) == ["tau", "t", "x_1", "lambda_1", "err_eta", "kkt_residual", "bound"]
    assert len(rows) == 201
    s = json.loads((out / "summary.json").read_text())
    assert s["bound"]["applicable"]
    for r in rows[1:]:
        assert float(r["err_eta"]) <= float(r["bound"]) + 1e-9
    assert s["max_err_eta"] <= max(float(r["bound"]) for r in rows[1:]) + 1e-9
    assert _all_finite(s)
    for key in ("mean_err_eta", "max_err_eta", "mean_relative_error", "mean_step_eta", "mean_violation"):
        assert key in s


def test_outputs_are_byte_identical(tmp_path):
    cfg = write(tmp_path, QUAD)
    main(["track", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["track", "--config", cfg, "--out", str(tmp_path / "b")])
    for name in ("trajectory.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_certify_and_tune(tmp_path):
    cfg = {"scenario": "keepout-disk", "T": 40, "params": {"alpha": 0.05, "eta": 1.0, "epsilon": 0.5},
           "scenario_params": {"a_amp": 0.1, "a_freq": 0.5}, "tuner": {"beta": 2.0},
           "certificates": {"t_grid_count": 5, "dir_count": 2}}
    path = write(tmp_path, cfg)
    assert main(["certify", "--config", path, "--out", str(tmp_path / "c"), "--delta", "0.1"]) == 0
    rep = json.loads((tmp_path / "c" / "certificate.json").read_text())
    assert 1 <= rep["kappa"] <= 1.41422
    assert rep["delta"] == 0.1
    assert rep["metadata"]["tag"] == "sampled-estimate"
    assert main(["tune", "--config", path, "--out", str(tmp_path / "t"), "--delta", "0.1"]) == 0
    tun = json.loads((tmp_path / "t" / "tuner.json").read_text())
    assert tun["tuner"]["eta_star"] * tun["tuner"]["eps_star"] == pytest.approx(tun["Lambda_m"])


def test_catching_command(tmp_path):
    cfg = {"scenario": "quadratic-tracking", "T": 10, "params": {"eta": 1.0, "epsilon": 1.0, "beta": 5.0},
           "scenario_params": {"b_offset": 0.5, "g_offset": 10.0}, "catching": {"T_base": 100},
           "z0": {"x": [0.0], "lambda": [0.0]}}
    out = tmp_path / "k"
    assert main(["catching", "--config", write(tmp_path, cfg), "--out", str(out), "--refinements", "3"]) == 0
    rows = list(csv.DictReader(open(out / "ladder.csv")))
    assert [int(r["T"]) for r in rows] == [100, 200, 400, 800]
    assert rows[-1]["gap"] == ""
    summ = json.loads((out / "catching_summary.json").read_text())
    assert all(0.8 <= v <= 1.2 for v in summ["gap_orders"])
    assert open(out / "path.csv").readline().strip() == "t,x_1,lambda_1"


def test_oracle_and_feeder_track(tmp_path):
    cfg = {"scenario": "feeder-surrogate", "T": 60, "scenario_params": {"n": 2},
           "params": {"alpha": 0.04, "eta": 75000, "epsilon": 1e-5}, "certificates": {"t_grid_count": 3}}
    path = write(tmp_path, cfg)
    assert main(["oracle", "--config", path, "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "oracle.csv").exists()
    assert main(["track", "--config", path, "--out", str(tmp_path / "t")]) == 0
    s = json.loads((tmp_path / "t" / "summary.json").read_text())
    assert "mean_err_eta" in s and "mean_step_eta" in s
    assert _all_finite(s)
