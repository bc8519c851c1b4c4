import hashlib
import json

import numpy as np
import pytest

from degenhyp import cli
from degenhyp.errors import DegenhypError


def read_csv_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    return header, [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def test_analyze_operator_model_problem(tmp_path):
    cfg = {"command": "analyze-operator", "degeneracy": {"l_star": 1, "T": 1.0},
           "problem": {"builtin": "qi", "params": {"k": 1.0}}}
    rep = cli.run(cfg, tmp_path)
    assert rep.status == "ok"
    assert rep.headline["delta_max"] == pytest.approx(2.0, abs=1e-12)
    assert rep.headline["loss_max"] == pytest.approx(1.0, abs=1e-12)
    assert rep.headline["cross_validation_discrepancy"] <= 1e-8
    header, rows = read_csv_rows(tmp_path / "delta.csv")
    assert header == ["x", "delta", "loss", "argmax_block", "argmax_xi"]
    assert all(float(r["delta"]) == pytest.approx(2.0, abs=1e-12) for r in rows)
    # config echo embedded in the artifact
    first = (tmp_path / "delta.csv").read_text().splitlines()[0]
    assert first.startswith("# ") and '"command": "analyze-operator"' in first
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"]["problem"]["builtin"] == "qi"
    assert "wall_time_s" in report


def test_analyze_operator_explicit_table(tmp_path):
    cfg = {"command": "analyze-operator", "degeneracy": {"l_star": 1},
           "problem": {"operator": {"m": 2, "coeffs": [
               {"j": 0, "alpha": 2, "value": -1.0},
               {"j": 0, "alpha": 1, "value": [0.0, 5.0]},
           ]}}}
    rep = cli.run(cfg, tmp_path)
    assert rep.headline["delta_max"] == pytest.approx(2.0, abs=1e-12)


def test_analyze_system_differential_zero_loss(tmp_path):
    cfg = {"command": "analyze-system", "degeneracy": {"l_star": 1},
           "problem": {"builtin": "differential"}}
    rep = cli.run(cfg, tmp_path)
    _, rows = read_csv_rows(tmp_path / "delta.csv")
    assert all(float(r["loss"]) == 0.0 for r in rows)
    assert rep.headline["loss_max"] == 0.0


def test_analyze_system_explicit_table(tmp_path):
    cfg = {"command": "analyze-system", "degeneracy": {"l_star": 1},
           "problem": {"system": {
               "n": 2,
               "a0": [[0.0, 1.0], [1.0, 0.0]],
               "a1": [[1.0, 0.0], [[0.0, 0.0], 0.0]],
               "roots": [{"mu": -1.0, "mult": 1}, {"mu": 1.0, "mult": 1}],
           }}}
    rep = cli.run(cfg, tmp_path)
    # B1 = M0 [[1,0],[0,0]] M0^-1 has diagonal (1/2, 1/2)
    assert rep.headline["delta_max"] == pytest.approx(0.5, abs=1e-10)


def test_loss_experiment_deterministic(tmp_path):
    cfg = {"command": "loss-experiment", "degeneracy": {"l_star": 1},
           "problem": {"builtin": "qi", "params": {"k": 1.0}},
           "experiment": {"sigma_data": 6.0, "t_probe": 1.0}, "seed": 7,
           "grids": {"n_modes": 512}, "tolerances": {"ode_tol": 1e-7}}
    cli.run(cfg, tmp_path / "a")
    cli.run(cfg, tmp_path / "b")
    ha = hashlib.sha256((tmp_path / "a" / "experiment.jsonl").read_bytes()).hexdigest()
    hb = hashlib.sha256((tmp_path / "b" / "experiment.jsonl").read_bytes()).hexdigest()
    assert ha == hb
    lines = (tmp_path / "a" / "experiment.jsonl").read_text().splitlines()
    head = json.loads(lines[0])
    assert head["type"] == "config" and head["config"]["seed"] == 7
    rec = json.loads(lines[1])
    assert rec["type"] == "result" and abs(rec["loss"] - 1.0) < 0.1


def test_solve_command_writes_trajectory(tmp_path):
    cfg = {"command": "solve", "degeneracy": {"l_star": 1},
           "problem": {"builtin": "hermitian-test"},
           "grids": {"n_modes": 64},
           "solve": {"t_out": [0.25, 0.5, 1.0], "data_sigma": 2.0},
           "tolerances": {"ode_tol": 1e-10}, "seed": 1}
    rep = cli.run(cfg, tmp_path)
    assert rep.headline["max_energy_ratio_unconjugated"] == pytest.approx(1.0, abs=1e-8)
    header, rows = read_csv_rows(tmp_path / "trajectory.csv")
    assert header == ["t", "component", "shell", "magnitude"]
    assert len(rows) == 3 * 2 * 32


def test_check_symbol_command(tmp_path):
    cfg = {"command": "check-symbol", "degeneracy": {"l_star": 1},
           "symbol": {"name": "weight-power", "m": 1.0, "eta": 1.0,
                      "max_orders": [1, 1, 1]}}
    rep = cli.run(cfg, tmp_path)
    assert rep.headline["passed"] is True
    header, rows = read_csv_rows(tmp_path / "symbol.csv")
    assert header == ["j", "alpha", "beta", "C", "verdict"]
    assert len(rows) == 8
    cfg_bad = dict(cfg, symbol={"name": "lambda-bracket", "m": 0.0, "eta": 0.0,
                                "max_orders": [1, 0, 1]})
    rep2 = cli.run(cfg_bad, tmp_path / "bad")
    assert rep2.headline["passed"] is False


def test_sweep_predicted_vs_measured(tmp_path):
    cfg = {"command": "sweep", "degeneracy": {"l_star": 1},
           "problem": {"builtin": "qi", "params": {"k": 0.0}},
           "experiment": {"sigma_data": 4.0, "t_probe": 1.0}, "seed": 3,
           "grids": {"n_modes": 512}, "tolerances": {"ode_tol": 1e-7},
           "sweep": {"path": "problem.params.k", "values": [0.0, 1.0]}}
    rep = cli.run(cfg, tmp_path, workers=2)
    assert rep.status == "ok" and rep.headline == {"points": 2, "failed": 0}
    header, rows = read_csv_rows(tmp_path / "summary.csv")
    assert rows[0]["status"] == "ok"
    for row, k in zip(rows, [0.0, 1.0]):
        predicted = abs(k + 0.25) - 0.25
        assert float(row["predicted_loss"]) == pytest.approx(predicted, abs=1e-12)
        assert float(row["loss"]) == pytest.approx(predicted, abs=0.15)
    merged = (tmp_path / "experiment.jsonl").read_text().splitlines()
    assert json.loads(merged[0])["type"] == "config"
    assert len(merged) == 3


def test_sweep_partial_failure(tmp_path):
    cfg = {"command": "sweep", "degeneracy": {"l_star": 1},
           "problem": {"builtin": "diverging-test", "params": {"rate": 1e-6}},
           "experiment": {"sigma_data": 2.0, "t_probe": 1.0}, "seed": 3,
           "grids": {"n_modes": 64}, "tolerances": {"ode_tol": 1e-7},
           "sweep": {"path": "problem.params.rate", "values": [1e-6, 1e4]}}
    with pytest.raises(DegenhypError):
        cli.run(cfg, tmp_path, workers=1)
    # summary still emitted with per-point status
    header, rows = read_csv_rows(tmp_path / "summary.csv")
    assert rows[0]["status"] == "ok"
    assert rows[1]["status"] == "numerical-failure"


def test_exit_codes(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({
        "degeneracy": {"l_star": 1},
        "problem": {"builtin": "qi", "params": {"k": 1.0}}}))
    assert cli.main(["analyze-operator", "--config", str(good),
                     "--out", str(tmp_path / "r1")]) == 0
    bad_schema = tmp_path / "bad.json"
    bad_schema.write_text(json.dumps({"degeneracy": {"l_star": 0}}))
    assert cli.main(["analyze-operator", "--config", str(bad_schema),
                     "--out", str(tmp_path / "r2")]) == 2
    assert cli.main(["frobnicate", "--config", str(good)]) == 2
    missing = tmp_path / "missing.json"
    assert cli.main(["analyze-operator", "--config", str(missing)]) == 2
    div = tmp_path / "div.json"
    div.write_text(json.dumps({
        "degeneracy": {"l_star": 1}, "problem": {"builtin": "diverging-test"},
        "grids": {"n_modes": 16}, "experiment": {"sigma_data": 2.0, "t_probe": 1.0}}))
    assert cli.main(["loss-experiment", "--config", str(div),
                     "--out", str(tmp_path / "r3")]) == 3


def test_empty_sweep_axis_is_config_error(tmp_path):
    cfg = {"command": "sweep", "degeneracy": {"l_star": 1},
           "problem": {"builtin": "qi", "params": {"k": 1.0}},
           "sweep": {"path": "problem.params.k", "values": []}}
    with pytest.raises(cli.ConfigError):
        cli.run(cfg, tmp_path)


def test_unknown_builtin_is_config_error(tmp_path):
    cfg = {"command": "analyze-operator", "degeneracy": {"l_star": 1},
           "problem": {"builtin": "no-such-problem"}}
    with pytest.raises(cli.ConfigError):
        cli.run(cfg, tmp_path)


def test_seed_override_changes_artifacts(tmp_path):
    base = {"degeneracy": {"l_star": 1},
            "problem": {"builtin": "qi", "params": {"k": 1.0}},
            "experiment": {"sigma_data": 4.0, "t_probe": 1.0},
            "grids": {"n_modes": 512}, "tolerances": {"ode_tol": 1e-7}, "seed": 1}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(base))
    assert cli.main(["loss-experiment", "--config", str(p), "--out", str(tmp_path / "s1"),
                     "--seed", "2"]) == 0
    rec = json.loads((tmp_path / "s1" / "experiment.jsonl").read_text().splitlines()[1])
    assert rec["seed"] == 2
