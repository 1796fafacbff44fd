import json
import os

import pandas as pd
import pytest

import app
from services.exceptions import SolverError


def _read_json(directory, name):
    with open(os.path.join(directory, name), encoding="utf-8") as f:
        return json.load(f)


def test_version_exits_cleanly(capsys):
    assert app.main(["--version"]) == 0
    assert "ensemble-lab" in capsys.readouterr().out


def test_equilibrium_krawtchouk(tmp_path):
    out = str(tmp_path)
    code = app.main(["equilibrium", "--family", "krawtchouk", "--m", "4", "--n-grid", "256",
                     "--output-dir", out])
    assert code == app.EXIT_OK

    summary = _read_json(out, "equilibrium_summary.json")
    assert summary["support_left"] == pytest.approx(0.5, abs=0.1)
    assert summary["support_right"] == pytest.approx(4.5, abs=0.1)
    assert summary["closed_form_right"] == pytest.approx(4.5)
    assert summary["converged"]

    frame = pd.read_csv(os.path.join(out, "equilibrium_density.csv"))
    assert list(frame.columns) == ["x", "phi_numeric", "phi_closed_form", "residual"]
    assert len(frame) == 256

    manifest = _read_json(out, "manifest.json")
    assert manifest["command"] == "equilibrium"
    density = next(o for o in manifest["outputs"] if o["path"] == "equilibrium_density.csv")
    assert density["schema"] == "density/v1"
    assert density["rows"] == 256
    assert len(density["sha256"]) == 64


def test_rate_krawtchouk(tmp_path):
    out = str(tmp_path)
    code = app.main(["rate", "--family", "krawtchouk", "--m", "4", "--n-grid", "256", "--points", "11",
                     "--t-min", "4.6", "--t-max", "5", "--asymptotic", "--output-dir", out])
    assert code == app.EXIT_OK
    frame = pd.read_csv(os.path.join(out, "rate_rate.csv"))
    assert list(frame.columns) == ["t", "J_numeric", "J_closed"]
    assert len(frame) == 11
    summary = _read_json(out, "rate_summary.json")
    assert summary["j_positive_beyond_edge"]
    assert summary["asymptotic"]["exponent"] == pytest.approx(1.5, abs=0.1)
    assert summary["asymptotic"]["prefactor_closed_form"] == pytest.approx(16.0 / 9.0)


def test_missing_flag_is_usage_error(tmp_path):
    assert app.main(["equilibrium", "--family", "krawtchouk", "--output-dir", str(tmp_path)]) == app.EXIT_USAGE
    assert app.main(["equilibrium", "--family", "unknown"]) == app.EXIT_USAGE
    assert not os.path.exists(os.path.join(tmp_path, "manifest.json"))


def test_validation_error_is_usage_error(tmp_path):
    code = app.main(["equilibrium", "--family", "krawtchouk", "--m", "4", "--s", "0.5", "--n-grid", "128",
                     "--output-dir", str(tmp_path)])
    assert code == app.EXIT_USAGE


def test_enumerate_pmf(tmp_path):
    out = str(tmp_path)
    code = app.main(["enumerate", "--family", "krawtchouk", "--n", "2", "--m", "2", "--pmf",
                     "--output-dir", out])
    assert code == app.EXIT_OK
    frame = pd.read_csv(os.path.join(out, "enumerate_states.csv"))
    assert len(frame) == 6
    assert list(frame.columns[:2]) == ["lambda_1", "lambda_2"]
    assert frame["probability"].sum() == pytest.approx(1.0, abs=1e-12)
    summary = _read_json(out, "enumerate_summary.json")
    assert summary["log_partition"] == pytest.approx(summary["log_partition_closed_form"], rel=1e-12)


def test_config_file_precedence(tmp_path):
    config = tmp_path / "params.json"
    config.write_text(json.dumps({"family": "krawtchouk", "n": 2, "m": 2, "theta": 0.5}), encoding="utf-8")
    out = str(tmp_path / "run")
    code = app.main(["enumerate", "--config", str(config), "--theta", "1.0", "--output-dir", out])
    assert code == app.EXIT_OK
    summary = _read_json(out, "enumerate_summary.json")
    assert summary["spec"]["theta"] == 1.0
    assert summary["spec"]["n"] == 2
    manifest = _read_json(out, "manifest.json")
    assert manifest["parameters"]["theta"] == 1.0


def test_config_file_unknown_key(tmp_path):
    config = tmp_path / "params.json"
    config.write_text(json.dumps({"bogus": 1}), encoding="utf-8")
    assert app.main(["enumerate", "--config", str(config)]) == app.EXIT_USAGE


def test_config_file_unreadable(tmp_path):
    config = tmp_path / "params.json"
    config.write_text("{not json", encoding="utf-8")
    assert app.main(["enumerate", "--config", str(config)]) == app.EXIT_USAGE


def test_sample_outputs(tmp_path):
    out = str(tmp_path)
    code = app.main(["sample", "--family", "krawtchouk", "--m", "2", "--n", "3", "--steps", "2000",
                     "--burnin", "100", "--thin", "10", "--start", "zero", "--tail", "1.0",
                     "--bins", "10", "--output-dir", out])
    assert code == app.EXIT_OK
    samples = pd.read_csv(os.path.join(out, "sample_samples.csv"))
    assert len(samples) == 190
    histogram = pd.read_csv(os.path.join(out, "sample_histogram.csv"))
    assert histogram["count"].sum() == 190 * 3
    summary = _read_json(out, "sample_summary.json")
    assert len(summary["digests"]) == 1
    assert 0.0 <= summary["ks_distance"] <= 1.0
    assert summary["tail"]["n_samples"] == 190


def test_sample_is_reproducible(tmp_path):
    argv = ["sample", "--family", "krawtchouk", "--m", "2", "--n", "3", "--steps", "1000",
            "--burnin", "0", "--thin", "5", "--seed", "9"]
    assert app.main(argv + ["--output-dir", str(tmp_path / "a")]) == app.EXIT_OK
    assert app.main(argv + ["--output-dir", str(tmp_path / "b")]) == app.EXIT_OK
    first = _read_json(str(tmp_path / "a"), "sample_summary.json")
    second = _read_json(str(tmp_path / "b"), "sample_summary.json")
    assert first["digests"] == second["digests"]


def test_identities_command(tmp_path, capsys):
    out = str(tmp_path)
    assert app.main(["identities", "--draws", "5", "--json", "--output-dir", out]) == app.EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["summary"]["identity_max_rel_error"] <= 1e-8
    assert os.path.exists(os.path.join(out, "identities_identities.csv"))
    assert os.path.exists(os.path.join(out, "identities_cells.csv"))


def test_solver_failure_writes_diagnostics(tmp_path, monkeypatch):
    def failing(*args, **kwargs):
        raise SolverError("не сошёлся", history=[1.0, 0.5])

    monkeypatch.setattr(app, "solve_unbounded", failing)
    out = str(tmp_path)
    code = app.main(["equilibrium", "--family", "jack", "--t", "1", "--output-dir", out])
    assert code == app.EXIT_NUMERICAL
    diagnostics = _read_json(out, "equilibrium_error.json")
    assert diagnostics["error"] == "SolverError"
    assert diagnostics["best"] is None
    assert diagnostics["history"] == [1.0, 0.5]


@pytest.mark.slow
def test_verify_command(tmp_path):
    out = str(tmp_path)
    assert app.main(["verify", "--output-dir", out]) == app.EXIT_OK
    report = _read_json(out, "verify_summary.json")
    assert report["passed"]
