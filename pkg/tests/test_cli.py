import csv
import json
from pathlib import Path

import numpy as np
import pytest

from mixedmfg import closed_form_A, MIParams, verify_drift_identity_mi, verify_drift_identity_mp
from mixedmfg.cli import main, parse_config, read_solution_csv

MP_BLOWUP = {"p": 0.47, "T": 3.0,
             "nc": {"b_alpha": 0.75, "b_X": 1.75, "b_mu": -5.2, "c_X": 0.35, "c_mu": 2.35, "c_T": 1.4},
             "c": {"b_alpha": 0.45, "b_X": -1.9, "b_mu": 2.0, "c_alpha": 0.9, "c_X": 0.67,
                   "c_mu": 1.9, "c_T": 1.8}}
MP_SMALL = {"p": 0.4, "nc": {"b_mu": 0.3, "mu0_mean": 1.0, "sigma": 0.5},
            "c": {"b_mu": -0.2, "c_X": 2.0, "mu0_mean": -1.0, "sigma": 0.5}}


def run(tmp_path, verb, doc, *extra, name="out"):
    cfg = tmp_path / f"{name}.json"
    cfg.write_text(json.dumps(doc))
    out = tmp_path / name
    code = main([verb, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def stderr_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_solve_mi_outputs(tmp_path):
    doc = {"model": "mi", "params": {"b_mu": 0.5, "lambda": 0.3, "c_T": 2.0, "mu0_mean": 1.0},
           "grid": {"n_steps": 400}}
    code, out = run(tmp_path, "solve", doc)
    assert code == 0
    rows = read_rows(out / "solution.csv")
    assert len(rows) == 401
    assert float(rows[-1]["A"]) == 2.0 and float(rows[-1]["B"]) == 0.0 and float(rows[-1]["C"]) == 0.0
    assert float(rows[0]["Xbar"]) == 1.0
    t = np.array([float(r["t"]) for r in rows])
    A = np.array([float(r["A"]) for r in rows])
    p = MIParams(b_mu=0.5, lam=0.3, c_T=2.0, mu0_mean=1.0)
    assert np.abs(A - closed_form_A(p, t)).max() < 1e-9
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["params"]["lambda"] == 0.3
    assert report["conditions"]["mi_condition"]["holds"] == "yes"
    assert report["variant"] == "fbsde_consistent"
    assert len(read_rows(out / "policy.csv")) == 401


def test_solution_csv_roundtrip_reproduces_residuals(tmp_path):
    for model, params in (("mi", {"b_mu": 0.5, "lambda": 0.3}), ("mp", MP_SMALL)):
        doc = {"model": model, "params": params, "grid": {"n_steps": 500}}
        code, out = run(tmp_path, "solve", doc, name=model)
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        sol = read_solution_csv(out / "solution.csv")
        cfg = parse_config(doc)
        verify = verify_drift_identity_mi if model == "mi" else verify_drift_identity_mp
        again = verify(cfg.params, sol).to_dict()
        assert abs(again["max_coefficient_residual"] - report["residuals"]["max_coefficient_residual"]) <= 1e-10


def test_literal_variant_flag(tmp_path):
    doc = {"model": "mi", "params": {"b_mu": 1.0}, "grid": {"n_steps": 400}}
    code, out = run(tmp_path, "solve", doc, "--variant", "paper")
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["variant"] == "paper_literal"
    assert report["residuals"]["max_coefficient_residual"] >= 0.05


def test_mp_solve_reports_diagonal_gain(tmp_path):
    code, out = run(tmp_path, "solve", {"model": "mp", "params": MP_SMALL, "grid": {"n_steps": 300}})
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["A_diagonal_max_offdiag"] <= 1e-12
    assert set(report["deterministic_cost"]) == {"NC", "C"}
    assert len(read_rows(out / "solution.csv")[0]) == 13


def test_check_writes_conditions(tmp_path):
    code, out = run(tmp_path, "check", {"model": "mi", "params": {"b_mu": -2.0, "c_mu": 1.0}})
    assert code == 0
    rep = json.loads((out / "conditions.json").read_text())["conditions"]["mi_condition"]
    assert rep["holds"] == "no" and rep["min_margin"] < 0


def test_check_with_user_candidate(tmp_path):
    eye = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]
    zero = [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
    doc = {"model": "mp", "params": MP_SMALL, "conditions": {"candidates": [{"E": eye, "F": zero}]}}
    code, out = run(tmp_path, "check", doc)
    assert code == 0
    rep = json.loads((out / "conditions.json").read_text())["conditions"]["mp_assumption"]
    assert rep["holds"] in ("yes", "inconclusive") and rep["candidates_tried"] == 1


def test_validation_error_names_field(tmp_path, capsys):
    code, _ = run(tmp_path, "solve", {"model": "mi", "params": {"lambda": 2.0}})
    assert code == 2
    assert stderr_json(capsys)["field"] == "lambda"
    code, _ = run(tmp_path, "solve", {"model": "mi", "params": {}, "bogus": 1})
    assert code == 2
    assert stderr_json(capsys)["field"] == "bogus"
    code, _ = run(tmp_path, "solve", {"model": "mi", "params": {}, "grid": {"n_steps": 3}})
    assert code == 2
    code, _ = run(tmp_path, "solve", {"model": "mi", "params": {}}, "--seed", "-4")
    assert code == 2
    assert stderr_json(capsys)["field"] == "seed"
    code, _ = run(tmp_path, "simulate", {"model": "mi", "params": {}})
    assert code == 2


def test_unreadable_config(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert stderr_json(capsys)["field"] == "config"


def test_blowup_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "solve", {"model": "mp", "params": MP_BLOWUP, "grid": {"n_steps": 600}})
    assert code == 3
    err = stderr_json(capsys)
    assert err["error"] == "riccati_blowup" and err["equation"] == "B"
    assert 0.0 < err["time"] < 3.0


def test_simulation_failure_exit_code(tmp_path, capsys):
    # explicit Euler on a coarse simulation grid cannot follow a very stiff gain
    doc = {"model": "mi", "params": {"b_alpha": 1000.0, "c_X": 1e4, "c_T": 0.1, "sigma": 0.1},
           "grid": {"n_steps": 100000}, "sim": {"N": 5, "n_runs": 2, "n_steps": 200, "epsilon": False}}
    code, _ = run(tmp_path, "simulate", doc)
    assert code == 4
    err = stderr_json(capsys)
    assert err["error"] == "simulation" and err["run"] == 0


def test_noiseless_single_agent_tracks_mean(tmp_path):
    doc = {"model": "mi", "params": {"b_mu": 0.5, "mu0_mean": 1.0}, "grid": {"n_steps": 2000},
           "sim": {"N": 1, "n_runs": 1, "scheme": "heun", "epsilon": False}}
    code, out = run(tmp_path, "simulate", doc)
    assert code == 0
    rows = read_rows(out / "sim_means.csv")
    emp = np.array([float(r["empirical_mean"]) for r in rows])
    ref = np.array([float(r["xbar"]) for r in rows])
    assert np.abs(emp - ref).max() <= 1e-6
    assert json.loads((out / "epsilon.json").read_text())["epsilon"] is None


def test_simulate_mp_outputs(tmp_path):
    doc = {"model": "mp", "params": MP_SMALL, "grid": {"n_steps": 100},
           "sim": {"N_nc": 4, "N_c": 6, "n_runs": 20}}
    code, out = run(tmp_path, "simulate", doc)
    assert code == 0
    assert set(read_rows(out / "costs.csv")[0]) == {"run", "cost_NC", "cost_C"}
    summary = json.loads((out / "epsilon.json").read_text())
    assert summary["epsilon"]["family"] and len(summary["consistency_by_group"]) == 2


def test_seed_override_changes_draws(tmp_path):
    doc = {"model": "mi", "params": {"sigma": 1.0}, "grid": {"n_steps": 50}, "seed": 1,
           "sim": {"N": 10, "n_runs": 5, "epsilon": False}}
    _, a = run(tmp_path, "simulate", doc, name="a")
    _, b = run(tmp_path, "simulate", doc, "--seed", "1", name="b")
    _, c = run(tmp_path, "simulate", doc, "--seed", "2", name="c")
    assert (a / "costs.csv").read_bytes() == (b / "costs.csv").read_bytes()
    assert (a / "costs.csv").read_bytes() != (c / "costs.csv").read_bytes()
    assert json.loads((c / "report.json").read_text())["invocation"]["seed"] == 2


def test_cost_stderr_scales_with_runs(tmp_path):
    base = {"model": "mi", "params": {"sigma": 1.0, "mu0_var": 0.5}, "grid": {"n_steps": 50}}
    se = []
    for n in (100, 400):
        doc = dict(base, sim={"N": 10, "n_runs": n, "epsilon": False})
        _, out = run(tmp_path, "simulate", doc, name=f"r{n}")
        se.append(json.loads((out / "epsilon.json").read_text())["cost_estimates"]["agent"]["stderr"])
    assert 1.6 <= se[0] / se[1] <= 2.4


def test_lambda_sweep(tmp_path):
    doc = {"model": "mi", "params": {"b_mu": 0.5}, "grid": {"n_steps": 200},
           "sweep": {"parameter": "lambda", "values": [0, 0.5, 1]}}
    code, out = run(tmp_path, "sweep", doc)
    assert code == 0
    rows = read_rows(out / "sweep_summary.csv")
    assert [float(r["value"]) for r in rows] == [0.0, 0.5, 1.0]
    assert all(r["exit_code"] == "0" for r in rows)
    assert (out / "lambda_001" / "solution.csv").exists()


def test_p_sweep_with_invalid_value(tmp_path):
    doc = {"model": "mp", "params": MP_SMALL, "grid": {"n_steps": 200},
           "sweep": {"parameter": "p", "values": [0.5, 1.0, 2.0]}}
    code, out = run(tmp_path, "sweep", doc)
    assert code == 0
    rows = read_rows(out / "sweep_summary.csv")
    assert [r["exit_code"] for r in rows] == ["0", "0", "2"]
    assert float(rows[1]["M5_norm"]) == 0.0 and float(rows[1]["M6_norm"]) == 0.0
    assert float(rows[0]["M5_norm"]) > 0.0


def test_sweep_all_failed(tmp_path):
    doc = {"model": "mi", "params": {}, "sweep": {"parameter": "lambda", "values": [-1, 3]}}
    code, _ = run(tmp_path, "sweep", doc)
    assert code == 5


def test_sweep_needs_section(tmp_path):
    code, _ = run(tmp_path, "sweep", {"model": "mi", "params": {}})
    assert code == 2


def test_n_sweep_consistency_decreases(tmp_path):
    doc = {"model": "mi", "params": {"b_mu": 0.5, "sigma": 1.0, "mu0_var": 0.5, "mu0_mean": 1.0},
           "grid": {"n_steps": 100}, "sim": {"n_runs": 50, "epsilon": False},
           "sweep": {"parameter": "N", "values": [10, 100, 1000]}}
    code, out = run(tmp_path, "sweep", doc)
    assert code == 0
    err = [float(r["consistency_error"]) for r in read_rows(out / "sweep_summary.csv")]
    assert err[0] > err[1] > err[2]


def test_reruns_are_byte_identical(tmp_path):
    doc = {"model": "mp", "params": MP_SMALL, "grid": {"n_steps": 100}, "seed": 99,
           "sim": {"N_nc": 4, "N_c": 6, "n_runs": 10}}
    _, a = run(tmp_path, "simulate", doc, name="a")
    _, b = run(tmp_path, "simulate", doc, name="b")
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_strict_json_output(tmp_path):
    code, out = run(tmp_path, "simulate", {"model": "mi", "params": {}, "grid": {"n_steps": 20},
                                           "sim": {"N": 1, "n_runs": 1}})
    assert code == 0
    for f in ("report.json", "epsilon.json"):
        json.loads(Path(out / f).read_text(), parse_constant=pytest.fail)
