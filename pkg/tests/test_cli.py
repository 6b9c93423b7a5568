"""End-to-end runs of the command line tool in temporary directories."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from neuronized.cli import main
from neuronized.data import named_scenario, write_matrix_csv


@pytest.fixture
def dataset(tmp_path):
    data, theta0 = named_scenario("table1-strong", seed=1).generate()
    X = data.X[:60, :10]
    write_matrix_csv(tmp_path / "X.csv", X, [f"x{j}" for j in range(10)])
    y = X @ (3 * theta0[:10]) + np.random.default_rng(0).standard_normal(60)
    write_matrix_csv(tmp_path / "y.csv", y[:, None], ["y"])
    write_matrix_csv(tmp_path / "theta0.csv", 3 * theta0[:10, None])
    return tmp_path


def run(*args):
    return main([str(a) for a in args])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSample:
    def test_alpha0_auto_and_outputs(self, dataset):
        out = dataset / "s"
        code = run("sample", "--x", dataset / "X.csv", "--y", dataset / "y.csv",
                   "--iterations", 600, "--burn-in", 100, "--out", out)
        assert code == 0
        cfg = json.loads((out / "resolved_config.json").read_text())
        assert cfg["resolved"]["hyperparameters"]["alpha0"] == pytest.approx(
            -stats.norm.ppf(1 / 10))
        rows = read_rows(out / "samples.csv")
        assert rows[0] == ["chain"] + [f"x{j}" for j in range(10)] + ["sigma_sq"]
        assert len(rows) == 501
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["posterior_mean"]) == 10

    def test_seed_determinism(self, dataset):
        args = ["sample", "--x", dataset / "X.csv", "--y", dataset / "y.csv",
                "--iterations", 300, "--burn-in", 50, "--chains", 2, "--seed", 7]
        assert run(*args, "--out", dataset / "a") == 0
        assert run(*args, "--out", dataset / "b") == 0
        assert (dataset / "a" / "samples.csv").read_bytes() == \
            (dataset / "b" / "samples.csv").read_bytes()

    @pytest.mark.parametrize("method", ["spsl-gamma", "blasso", "horseshoe", "n-horseshoe"])
    def test_other_methods_run(self, dataset, method):
        out = dataset / method
        assert run("sample", "--x", dataset / "X.csv", "--y", dataset / "y.csv",
                   "--method", method, "--iterations", 400, "--burn-in", 100,
                   "--format", "jsonl", "--out", out) == 0
        lines = (out / "samples.jsonl").read_text().splitlines()
        assert len(lines) == 300 and "theta" in json.loads(lines[0])

    def test_missing_file_exits_2(self, tmp_path, capsys):
        assert run("sample", "--x", tmp_path / "nope.csv", "--out", tmp_path) == 2
        assert "nope.csv" in capsys.readouterr().err

    def test_bad_flag_exits_2(self):
        assert run("sample", "--method", "ridge") == 2


class TestMapAndPath:
    def test_map_and_config_round_trip(self, dataset):
        out = dataset / "m"
        assert run("map", "--x", dataset / "X.csv", "--y", dataset / "y.csv", "--out", out) == 0
        first = (out / "map.json").read_bytes()
        res = json.loads(first)
        assert len(res["theta_hat"]) == 10 and res["support_rule"] == "nonzero"
        assert run("map", "--config", out / "resolved_config.json", "--out", dataset / "m2") == 0
        assert (dataset / "m2" / "map.json").read_bytes() == first

    def test_tau_schedule_auto(self, dataset):
        out = dataset / "t"
        assert run("map", "--x", dataset / "X.csv", "--y", dataset / "y.csv",
                   "--activation", "identity", "--target", "auto", "--out", out) == 0
        sched = json.loads((out / "resolved_config.json").read_text())["resolved"]["schedule"]
        assert sched["kind"] == "tau_path" and len(sched["values"]) == 20
        assert sched["values"][-1] == pytest.approx(1 / 100)
        res = json.loads((out / "map.json").read_text())
        assert res["support_rule"] == "threshold"

    def test_path(self, dataset):
        out = dataset / "p"
        assert run("path", "--x", dataset / "X.csv", "--y", dataset / "y.csv",
                   "--grid", "0:2:5", "--out", out) == 0
        rows = read_rows(out / "path.csv")
        assert len(rows) == 6 and rows[0][0] == "hyper"
        assert [float(r[0]) for r in rows[1:]] == [0.0, 0.5, 1.0, 1.5, 2.0]

    def test_unknown_config_key(self, dataset):
        (dataset / "c.json").write_text(json.dumps({"bogus": 1}))
        assert run("map", "--config", dataset / "c.json") == 2


class TestSimulateDiagnose:
    def test_simulate_replicates(self, tmp_path):
        assert run("simulate", "--scenario", "table1-strong", "--replicates", 3,
                   "--out", tmp_path) == 0
        dirs = sorted(d.name for d in tmp_path.iterdir() if d.is_dir())
        assert dirs == ["rep_001", "rep_002", "rep_003"]
        X0 = np.loadtxt(tmp_path / "rep_001" / "X.csv", delimiter=",", skiprows=1, ndmin=2)
        X1 = np.loadtxt(tmp_path / "rep_002" / "X.csv", delimiter=",", skiprows=1, ndmin=2)
        assert X0.shape == (200, 50) and not np.array_equal(X0, X1)
        sc = json.loads((tmp_path / "rep_003" / "scenario.json").read_text())
        assert sc["n"] == 200 and sc["s"] == 0.3

    def test_simulate_needs_size(self, tmp_path):
        assert run("simulate", "--out", tmp_path) == 2

    def test_diagnose(self, dataset):
        out = dataset / "s"
        assert run("sample", "--x", dataset / "X.csv", "--y", dataset / "y.csv",
                   "--method", "nspsl-exact", "--iterations", 1500, "--burn-in", 300,
                   "--out", out) == 0
        assert run("diagnose", "--samples", out / "samples.csv",
                   "--truth", dataset / "theta0.csv", "--out", dataset / "d") == 0
        metrics = json.loads((dataset / "d" / "metrics.json").read_text())
        rec = next(iter(metrics.values())) if isinstance(metrics, dict) else metrics[0]
        assert {"mse", "angle", "mcc"} <= set(rec)
        assert -1 <= rec["mcc"] <= 1
        rows = read_rows(dataset / "d" / "summary.csv")
        assert rows[0][0] == "method" and len(rows) == 2


class TestMatchBench:
    def test_match_from_file(self, tmp_path):
        draws = np.random.default_rng(0).laplace(0, 0.7, 10_000)
        np.savetxt(tmp_path / "t.txt", draws)
        assert run("match", "--target-file", tmp_path / "t.txt", "--sample-size", 10000,
                   "--basis-count", 6, "--steps", 200, "--distance", "KS",
                   "--out", tmp_path) == 0
        res = json.loads((tmp_path / "activation.json").read_text())
        assert res["distance"] < 0.1

    def test_small_bench(self, tmp_path):
        assert run("bench", "--scenario", "table1-strong", "--methods", "nspsl-exact,blasso",
                   "--budget", "0.2,0.4", "--chains", 2, "--burn-in", 50,
                   "--out", tmp_path) == 0
        rows = read_rows(tmp_path / "bench.csv")
        assert rows[0][:3] == ["method", "budget", "chain"]
        assert len(rows) == 1 + 2 * 2 * 2
        assert {r[0] for r in rows[1:]} == {"nspsl-exact", "blasso"}


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "neuronized", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and res.stdout.strip()
