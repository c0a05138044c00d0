import json

import numpy as np
import pytest
from click.testing import CliRunner

from jumprl.cli import main
from jumprl.portfolio import synthetic_gbm_jump_series, write_price_csv


@pytest.fixture
def runner():
    return CliRunner()


def read_json(path):
    return json.loads(path.read_text())


class TestSimulate:
    def test_paper_preset_writes_paths_and_manifest(self, runner, tmp_path):
        result = runner.invoke(main, ["simulate", "--preset", "paper-sim", "--paths", "3",
                                      "--seed", "7", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        manifest = read_json(tmp_path / "manifest.json")
        assert manifest["paths"] == 3
        assert manifest["grid"] == {"horizon": 1.0, "n_steps": 1000, "dt": 0.001}
        assert manifest["spec"]["x0"] == 0.1
        for name in manifest["files"]:
            lines = (tmp_path / name).read_text().strip().splitlines()
            assert lines[0] == "t,observed,continuous,jump_flag"
            assert len(lines) == 1002

    def test_zero_paths_manifest_only(self, runner, tmp_path):
        result = runner.invoke(main, ["simulate", "--paths", "0", "--seed", "1",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 0
        assert (tmp_path / "manifest.json").exists()
        assert not list(tmp_path.glob("path_*.csv"))

    def test_invalid_preset_exits_2_and_lists(self, runner, tmp_path):
        result = runner.invoke(main, ["simulate", "--preset", "nope", "--seed", "1",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 2
        assert "paper-sim" in result.output

    def test_missing_seed_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["simulate", "--paths", "1", "--out", str(tmp_path)])
        assert result.exit_code == 2
        assert "seed" in result.output.lower()


class TestTrain:
    def test_zero_alpha_keeps_theta0(self, runner, tmp_path):
        result = runner.invoke(main, ["train", "--family", "linear", "--loss", "msbve",
                                      "--episodes", "1", "--alpha", "1e-12",
                                      "--theta0", "0.5", "--dt", "0.1",
                                      "--seed", "3", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        doc = read_json(tmp_path / "train_result.json")
        assert doc["theta_final"] == pytest.approx(0.5, abs=1e-9)
        assert "nearest reference" in result.output
        trace = (tmp_path / "trace.csv").read_text().splitlines()
        assert trace[0] == "episode,theta,loss"

    def test_byte_identical_reruns(self, runner, tmp_path):
        args = ["train", "--family", "linear", "--loss", "mstde", "--episodes", "20",
                "--paths", "4", "--alpha", "0.001", "--dt", "0.05",
                "--seed", "11", "--out", str(tmp_path)]
        assert runner.invoke(main, args).exit_code == 0
        first = (tmp_path / "train_result.json").read_bytes()
        assert runner.invoke(main, args).exit_code == 0
        assert (tmp_path / "train_result.json").read_bytes() == first

    def test_divergence_exits_3_with_partial_trace(self, runner, tmp_path):
        with np.errstate(over="ignore", invalid="ignore"):
            result = runner.invoke(main, ["train", "--family", "exponential",
                                          "--loss", "mstde", "--episodes", "50",
                                          "--paths", "4", "--alpha", "1e30",
                                          "--dt", "0.05", "--seed", "5",
                                          "--out", str(tmp_path)])
        assert result.exit_code == 3
        doc = read_json(tmp_path / "train_result.json")
        assert "error" in doc

    def test_config_file_with_flag_override(self, runner, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("family = linear\nloss = msbve\nepisodes = 5\n"
                       "paths = 2\nalpha = 1e-12\ntheta0 = 0.25  # comment\ndt = 0.1\n"
                       f"out = {tmp_path}\n")
        result = runner.invoke(main, ["train", "--config", str(cfg), "--seed", "2",
                                      "--theta0", "0.75"])
        assert result.exit_code == 0, result.output
        doc = read_json(tmp_path / "train_result.json")
        # the flag wins over the file value
        assert doc["theta_final"] == pytest.approx(0.75, abs=1e-9)


class TestCompare:
    def test_empty_families_empty_report(self, runner, tmp_path):
        result = runner.invoke(main, ["compare", "--families", "", "--out", str(tmp_path)])
        assert result.exit_code == 0
        doc = read_json(tmp_path / "compare_report.json")
        assert doc == {"families": {}}

    def test_linear_cells_and_gap_fields(self, runner, tmp_path):
        result = runner.invoke(main, ["compare", "--families", "linear",
                                      "--episodes", "10", "--paths", "4",
                                      "--alpha", "0.001", "--dt", "0.05",
                                      "--seed", "4", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        doc = read_json(tmp_path / "compare_report.json")
        cell = doc["families"]["linear"]
        assert set(cell) >= {"mstde", "msbve", "oracle_reference"}
        assert cell["msbve"]["theta_reference"] == pytest.approx(-1.5)
        assert cell["mstde"]["theta_reference"] == pytest.approx(-403 / 252)
        assert cell["oracle_reference"] == pytest.approx(-1.5)
        assert doc["reference_minimizers"]["quadratic"]["oracle"] == pytest.approx(-15 / 52)
        assert (tmp_path / "trace_linear_msbve.csv").exists()

    def test_oracle_scan_cell(self, runner, tmp_path):
        result = runner.invoke(main, ["compare", "--families", "linear",
                                      "--episodes", "5", "--paths", "2",
                                      "--alpha", "0.001", "--dt", "0.1",
                                      "--oracle-scan", "--scan-paths", "500",
                                      "--scan-steps", "100",
                                      "--seed", "4", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        doc = read_json(tmp_path / "compare_report.json")
        # small-sample scan still lands in the right neighborhood
        assert doc["families"]["linear"]["oracle_scan"] == pytest.approx(-1.5, abs=0.15)


@pytest.fixture(scope="module")
def fixture_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "prices.csv"
    series = synthetic_gbm_jump_series(14, bars_per_day=10, seed=42)
    write_price_csv(series, path)
    return path


class TestBacktest:
    def test_runs_both_losses(self, runner, tmp_path, fixture_csv):
        result = runner.invoke(main, ["backtest", "--data", str(fixture_csv),
                                      "--bars-per-day", "10", "--train-days", "8",
                                      "--mode", "both", "--loss", "both",
                                      "--steps-per-update", "2",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        doc = read_json(tmp_path / "backtest_report.json")
        assert set(doc["cells"]) == {"mstde_raw", "mstde_thresholded",
                                     "msbve_raw", "msbve_thresholded"}
        assert set(doc["sharpe_table"]) == {"mstde", "msbve"}
        csv_lines = (tmp_path / "backtest_msbve_raw.csv").read_text().splitlines()
        assert csv_lines[0] == "date,theta,terminal_wealth,daily_return"

    def test_insufficient_days_exits_2(self, runner, tmp_path, fixture_csv):
        result = runner.invoke(main, ["backtest", "--data", str(fixture_csv),
                                      "--bars-per-day", "10", "--train-days", "126",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 2
        assert "127" in result.output

    def test_missing_data_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["backtest", "--out", str(tmp_path)])
        assert result.exit_code == 2
