import json
import os
import subprocess
import sys

import numpy as np
import pytest

from plsivc.dataio import dataset_from_csv, dataset_from_roles, dataset_to_csv
from plsivc.simulation import SimConfig, gen_dataset

DATA = os.path.join(os.path.dirname(__file__), "..", "data", "bodyfat.csv")


def run_cli(args):
    return subprocess.run([sys.executable, "-m", "plsivc.cli", *args],
                          capture_output=True, text=True)


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    cfg = SimConfig(n=120, sigma=0.5, reps=1, seed=55)
    data, _ = gen_dataset(cfg, 0)
    path = tmp_path_factory.mktemp("data") / "ds.csv"
    dataset_to_csv(data, path)
    return data, str(path)


class TestDataIO:
    def test_csv_round_trip_bit_exact(self, small_dataset, tmp_path):
        data, path = small_dataset
        back = dataset_from_csv(path)
        np.testing.assert_array_equal(back.y, data.y)
        np.testing.assert_array_equal(back.u, data.u)
        np.testing.assert_array_equal(back.x, data.x)
        np.testing.assert_array_equal(back.z, data.z)

    def test_role_mapping(self, small_dataset):
        _, path = small_dataset
        data, names = dataset_from_roles(
            path, "y", ["x1", "x2"], ["z1"], ["u1"], add_z_intercept=True)
        assert data.p == 2 and data.q == 2 and data.d == 1
        np.testing.assert_array_equal(data.z[:, 0], 1.0)
        assert names["varying"] == ["intercept", "z1"]


class TestExitCodes:
    def test_usage_error_is_one(self):
        r = run_cli(["simulate", "--sigma", "0.5"])
        assert r.returncode == 1

    def test_unknown_command_is_one(self):
        r = run_cli(["frobnicate"])
        assert r.returncode == 1

    def test_data_error_is_two(self):
        r = run_cli(["bodyfat", "--input", "/no/such/file.csv"])
        assert r.returncode == 2
        err = json.loads(r.stderr.strip().splitlines()[-1])
        assert err["error"]["code"] == 2

    def test_schema_error_names_column(self, small_dataset):
        _, path = small_dataset
        r = run_cli(["fit", "--input", path, "--response", "nope",
                     "--index", "x1,x2", "--varying", "z1"])
        assert r.returncode == 2
        assert "nope" in r.stderr


class TestFitCommand:
    def test_fit_json_contract(self, small_dataset, tmp_path):
        _, path = small_dataset
        out = tmp_path / "out"
        r = run_cli(["fit", "--input", path, "--lam", "0.05", "--knots", "1",
                     "--out-dir", str(out)])
        assert r.returncode == 0, r.stderr
        payload = json.loads((out / "fit.json").read_text())
        for key in ("beta", "theta", "gamma", "selected", "converged",
                    "iterations", "rss", "objective"):
            assert key in payload
        assert len(payload["beta"]) == 10
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "fit"
        assert manifest["input_digest"]
        assert "fit.json" in manifest["outputs"]


class TestSimulateCommand:
    BASE = ["simulate", "--n", "80", "--sigma", "0.5", "--reps", "2",
            "--seed", "5", "--methods", "scad,oracle", "--k-grid", "1",
            "--n-lambdas", "2", "--no-figures"]

    def _digest_dir(self, d):
        out = {}
        for name in sorted(os.listdir(d)):
            with open(os.path.join(d, name), "rb") as fh:
                out[name] = fh.read()
        return out

    def test_outputs_and_manifest(self, tmp_path):
        out = tmp_path / "sim"
        r = run_cli(self.BASE + ["--out-dir", str(out)])
        assert r.returncode == 0, r.stderr
        names = sorted(os.listdir(out))
        assert "summary.csv" in names
        assert "rase_samples.csv" in names
        assert "curves_scad.csv" in names
        assert "manifest.json" in names

    def test_byte_identical_across_runs_and_threads(self, tmp_path):
        outs = []
        for i, threads in enumerate((1, 1, 2)):
            out = tmp_path / f"sim{i}"
            r = run_cli(self.BASE + ["--out-dir", str(out),
                                     "--threads", str(threads)])
            assert r.returncode == 0, r.stderr
            outs.append(self._digest_dir(out))
        assert outs[0] == outs[1]
        assert outs[0] == outs[2]


class TestPlotDataCommand:
    def test_derives_boxplot_stats(self, tmp_path):
        sim = tmp_path / "sim"
        r = run_cli(TestSimulateCommand.BASE + ["--out-dir", str(sim)])
        assert r.returncode == 0, r.stderr
        out = tmp_path / "plots"
        r = run_cli(["plot-data", "--campaign-dir", str(sim),
                     "--out-dir", str(out), "--no-figures"])
        assert r.returncode == 0, r.stderr
        assert (out / "rase_boxplot_stats.csv").exists()
        assert (out / "manifest.json").exists()
