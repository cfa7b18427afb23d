import csv
import json
import subprocess
import sys
import time

import pytest

from nnri.cli import main
from nnri.empirical import synthetic_dataset, write_dataset


@pytest.fixture
def data_csv(tmp_path):
    d, _ = synthetic_dataset("lognormal_small", "mcar75", 1000, seed=5)
    p = tmp_path / "svy.csv"
    write_dataset(d, p)
    return p


def test_simulate_smoke_config(tmp_path, capsys):
    cfg = tmp_path / "smoke.toml"
    cfg.write_text('name = "smoke"\nscenario = "uniform100k"\nreplicates = 2\n', encoding="utf-8")
    t0 = time.perf_counter()
    assert main(["simulate", str(cfg), "--out-dir", str(tmp_path / "out")]) == 0
    assert time.perf_counter() - t0 < 10
    rows = list(csv.DictReader(open(tmp_path / "out" / "smoke.csv", encoding="utf-8")))
    assert {r["method"] for r in rows} == {"NAIVE", "PARAM1", "PARAM2", "NONPARAM", "PARAM1(M)",
                                           "PARAM2(M)", "NONPARAM(M)"}
    assert (tmp_path / "out" / "smoke-coverage.csv").exists()
    assert "Relative bias" in capsys.readouterr().out


def test_simulate_preset_table_shape(tmp_path, capsys):
    rc = main(["simulate", "--preset", "scenario1-mcar75", "-B", "3", "--seed", "9",
               "--method", "NAIVE,PARAM1", "--method", "PARAM2", "--out-dir", str(tmp_path),
               "--format", "json"])
    assert rc == 0
    data = json.loads((tmp_path / "scenario1-mcar75.json").read_text(encoding="utf-8"))
    assert data["config"]["seed"] == 9 and data["completed"] == 3
    out = capsys.readouterr().out
    header = [line for line in out.splitlines() if line.startswith("Method")][0]
    assert header.split() == ["Method", "Y1", "Y2", "Y3", "Y4", "Y5"]


def test_list_presets(capsys):
    assert main(["simulate", "--list-presets"]) == 0
    assert len(capsys.readouterr().out.split()) == 24


def run(*args):
    return subprocess.run([sys.executable, "-m", "nnri.cli", *args], capture_output=True, text=True)


def test_exit_code_config_error(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('replicates = 3\nscenario = "scenario9"\n', encoding="utf-8")
    r = run("simulate", str(bad))
    assert r.returncode == 2
    assert "bad.toml:2: scenario" in r.stderr
    broken = tmp_path / "broken.toml"
    broken.write_text('a = 1\nb = = 2\n', encoding="utf-8")
    r = run("simulate", str(broken))
    assert r.returncode == 2 and "broken.toml:2" in r.stderr


def test_exit_code_data_error(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("unit_id,stratum,weight,x,a,respondent\n1,1,0.2,5,5,1\n", encoding="utf-8")
    r = run("impute", str(p), "--out-dir", str(tmp_path))
    assert r.returncode == 3 and "weight" in r.stderr


def test_exit_code_numeric_error(tmp_path, monkeypatch):
    from nnri import cli
    from nnri.errors import NumericError

    def boom(*a, **k):
        raise NumericError("forced")

    monkeypatch.setattr(cli, "impute_dataset", boom)
    p = tmp_path / "d.csv"
    p.write_text("unit_id,stratum,weight,x,a,respondent\n1,1,1,5,5,1\n", encoding="utf-8")
    assert main(["impute", str(p), "--out-dir", str(tmp_path)]) == 4


def test_analyze_outputs(data_csv, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["analyze", str(data_csv), "--out-dir", str(out), "--format", "json",
                 "--diagnostics"]) == 0
    text = capsys.readouterr().out
    assert "Variance ratio to naive" in text and "Coefficient of variation" in text
    data = json.loads((out / "svy-analysis.json").read_text(encoding="utf-8"))
    assert len(data["variance_ratio"]) == 6
    diag = json.loads((out / "svy-gam.json").read_text(encoding="utf-8"))
    assert {"method", "lambda", "K", "objective_trace", "converged"} <= set(diag)


def test_impute_command(data_csv, tmp_path):
    assert main(["impute", str(data_csv), "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "svy-imputed.csv", encoding="utf-8")))
    for r in rows:
        total = sum(float(r[f"y{t}"]) for t in range(1, 6))
        assert total == pytest.approx(float(r["x"]), rel=1e-9)
        assert (r["donor_id"] != "") == (r["imputed"] == "1")


def test_variance_command(data_csv, tmp_path):
    assert main(["variance", str(data_csv), "--method", "param2:modeled", "--method", "param1",
                 "--ve-mode", "negligible-f", "--vm-mode", "jackknife",
                 "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "svy-variance.csv", encoding="utf-8")))
    assert {(r["method_R"], r["method_sigma"]) for r in rows} == {
        ("param2", "modeled"), ("param1", "direct"), ("naive", "none")}
    assert main(["variance", str(data_csv), "--format", "json", "--out-dir", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "svy-variance.json").read_text(encoding="utf-8"))
    assert data["scale"] == "total"


def test_bad_method_flag(data_csv, tmp_path):
    assert main(["variance", str(data_csv), "--method", "param7", "--out-dir", str(tmp_path)]) == 2
