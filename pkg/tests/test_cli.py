"""
End-to-end tests for the command-line interface.
"""
import hashlib
import json
from pathlib import Path

import pytest

from filterlab.cli.csv_io import read_rows, summary_path
from filterlab.main import main
from filterlab.tools import validation_tool
from filterlab.tools.validation_tool import CheckResult, SuiteResult

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "data" / "scenarios"


def write_config(tmp_path, name="scenario.json", **fields):
    payload = {
        "schema_version": 1,
        "model": {"id": "range-bearing-2d"},
        "horizon": 20,
        "seed": 5,
    }
    payload.update(fields)
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def error_payload(stderr):
    lines = [line for line in stderr.splitlines() if line.startswith("{")]
    assert lines, stderr
    return json.loads(lines[-1])


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class TestSimulateCommand:
    """Tests for the simulate subcommand."""

    def test_writes_trajectory(self, tmp_path):
        """Test one row per step plus the initial state."""
        out = tmp_path / "traj.csv"
        assert main(["simulate", "--config", write_config(tmp_path), "--out", str(out)]) == 0
        rows = read_rows(out)
        assert len(rows) == 21
        assert list(rows[0]) == ["step", "x_0", "x_1", "x_2", "u_0", "u_1", "z_0", "z_1", "z_2", "z_3"]
        assert rows[0]["u_0"] == "" and rows[0]["z_0"] == ""
        assert [int(row["step"]) for row in rows] == list(range(21))

    def test_seed_override(self, tmp_path):
        """Test --seed changes the draws and equal seeds reproduce the file."""
        config = write_config(tmp_path)
        paths = [tmp_path / f"traj{i}.csv" for i in range(3)]
        main(["simulate", "--config", config, "--out", str(paths[0]), "--seed", "1"])
        main(["simulate", "--config", config, "--out", str(paths[1]), "--seed", "1"])
        main(["simulate", "--config", config, "--out", str(paths[2]), "--seed", "2"])
        assert digest(paths[0]) == digest(paths[1])
        assert digest(paths[0]) != digest(paths[2])


class TestRunCommand:
    """Tests for the run subcommand."""

    def test_writes_report_and_summary(self, tmp_path, capsys):
        """Test T report rows, the summary sidecar and the stdout summary."""
        out = tmp_path / "run.csv"
        code = main(["run", "--config", write_config(tmp_path), "--out", str(out), "--filter", "iekf"])
        assert code == 0
        rows = read_rows(out)
        assert len(rows) == 20
        assert {row["filter"] for row in rows} == {"iekf"}
        assert list(rows[0])[-3:] == ["nees", "iterations", "innovation_norm"]

        summary = json.loads(summary_path(out).read_text(encoding="utf-8"))
        assert summary["model"] == "range-bearing-2d"
        assert summary["seed"] == 5
        assert summary["runs"][0]["filter"] == "iekf"
        assert len(summary["runs"][0]["rmse"]) == 3
        assert "mean_nees" in capsys.readouterr().out

    def test_quiet_suppresses_stdout(self, tmp_path, capsys):
        """Test --quiet prints nothing to standard output."""
        out = tmp_path / "run.csv"
        assert main(["--quiet", "run", "--config", write_config(tmp_path), "--out", str(out)]) == 0
        assert capsys.readouterr().out == ""

    def test_outputs_are_deterministic(self, tmp_path):
        """Test two runs of one scenario write byte-identical files."""
        config = str(SCENARIO_DIR / "heading-robot-se2-lite.json")
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["--quiet", "run", "--config", config, "--out", str(first)])
        main(["--quiet", "run", "--config", config, "--out", str(second)])
        assert digest(first) == digest(second)
        assert digest(summary_path(first)) == digest(summary_path(second))

    def test_iterations_respect_max_iters(self, tmp_path):
        """Test the shipped heading scenario never exceeds its 10 iterations."""
        out = tmp_path / "ieskf.csv"
        config = str(SCENARIO_DIR / "heading-robot-se2-lite.json")
        assert main(["--quiet", "run", "--config", config, "--out", str(out), "--filter", "ieskf"]) == 0
        iterations = [int(row["iterations"]) for row in read_rows(out)]
        assert len(iterations) == 300
        assert all(1 <= count <= 10 for count in iterations)

    def test_invalid_filter_kind(self, tmp_path, capsys):
        """Test an unknown --filter is a usage error naming the field."""
        out = tmp_path / "run.csv"
        assert main(["run", "--config", write_config(tmp_path), "--out", str(out), "--filter", "ukf"]) == 2
        payload = error_payload(capsys.readouterr().err)
        assert payload["field"] == "filter.kind"
        assert payload["exit_code"] == 2

    def test_incompatible_filter(self, tmp_path, capsys):
        """Test a filter that cannot run the model exits with 2."""
        out = tmp_path / "run.csv"
        assert main(["run", "--config", write_config(tmp_path), "--out", str(out), "--filter", "kf"]) == 2
        assert error_payload(capsys.readouterr().err)["error"] == "IncompatibleFilterError"


class TestCompareCommand:
    """Tests for the compare subcommand."""

    def test_rows_per_filter(self, tmp_path):
        """Test one block of T rows per requested filter, in order."""
        out = tmp_path / "compare.csv"
        config = str(SCENARIO_DIR / "linear-1d.json")
        code = main(["--quiet", "compare", "--config", config, "--out", str(out), "--filter", "kf", "--filter", "kf1d"])
        assert code == 0
        rows = read_rows(out)
        assert len(rows) == 100
        assert [row["filter"] for row in rows] == ["kf"] * 50 + ["kf1d"] * 50
        summary = json.loads(summary_path(out).read_text(encoding="utf-8"))
        assert [run["filter"] for run in summary["runs"]] == ["kf", "kf1d"]

    def test_document_compare_list(self, tmp_path):
        """Test the document's compare list is used when no --filter is given."""
        out = tmp_path / "compare.csv"
        config = str(SCENARIO_DIR / "range-bearing-2d.json")
        assert main(["--quiet", "compare", "--config", config, "--out", str(out)]) == 0
        kinds = {row["filter"] for row in read_rows(out)}
        assert kinds == {"ekf", "iekf", "eskf", "ieskf", "dead-reckoning"}

    def test_single_iteration_iekf_matches_ekf(self, tmp_path):
        """Test iekf with max_iters = 1 writes the same estimates as ekf."""
        config = write_config(tmp_path, filter={"iteration": {"max_iters": 1}})
        out = tmp_path / "compare.csv"
        code = main(["--quiet", "compare", "--config", config, "--out", str(out), "--filter", "ekf", "--filter", "iekf"])
        assert code == 0
        rows = read_rows(out)
        ekf = [row for row in rows if row["filter"] == "ekf"]
        iekf = [row for row in rows if row["filter"] == "iekf"]
        columns = [name for name in rows[0] if name.startswith(("x_hat", "P_diag")) or name == "nees"]
        for a, b in zip(ekf, iekf):
            assert [a[name] for name in columns] == [b[name] for name in columns]


class TestValidateCommand:
    """Tests for the validate subcommand."""

    def test_passing_suite(self, capsys):
        """Test a passing suite exits with 0 and prints its margins."""
        assert main(["validate", "--suite", "gain-monotonicity"]) == 0
        out = capsys.readouterr().out
        assert "[PASS] gain-monotonicity" in out
        assert "margin=" in out

    def test_failing_suite(self, monkeypatch, capsys):
        """Test a failing suite exits with 1 and reports the failed check."""
        failing = SuiteResult(suite="demo", checks=[CheckResult(name="gap", value=1.0, threshold=1e-6)])
        monkeypatch.setattr(validation_tool, "SUITES", {"demo": lambda: failing})
        assert main(["validate", "--suite", "demo"]) == 1
        payload = error_payload(capsys.readouterr().err)
        assert payload["exit_code"] == 1
        assert "gap" in payload["message"]

    def test_unknown_suite(self, capsys):
        """Test an unknown suite is a usage error."""
        assert main(["validate", "--suite", "nope"]) == 2
        assert error_payload(capsys.readouterr().err)["field"] == "suite"


class TestErrorHandling:
    """Tests for exit codes and the error payload."""

    def test_bad_noise_length(self, tmp_path, capsys):
        """Test a wrong-length noise list exits 2 with the document path."""
        config = write_config(tmp_path, model={"id": "range-bearing-2d", "params": {"obs_noise": [0.1]}})
        assert main(["run", "--config", config, "--out", str(tmp_path / "r.csv")]) == 2
        payload = error_payload(capsys.readouterr().err)
        assert payload == {
            "error": "ConfigError",
            "message": payload["message"],
            "field": "model.params.obs_noise",
            "exit_code": 2,
        }

    def test_schema_version(self, tmp_path, capsys):
        """Test an unsupported schema_version exits 2."""
        config = write_config(tmp_path, schema_version=3)
        assert main(["simulate", "--config", config, "--out", str(tmp_path / "t.csv")]) == 2
        assert error_payload(capsys.readouterr().err)["field"] == "schema_version"

    def test_unknown_key(self, tmp_path, capsys):
        """Test unknown keys exit 2 naming the key."""
        config = write_config(tmp_path, landmarks=[[0.0, 0.0]])
        assert main(["simulate", "--config", config, "--out", str(tmp_path / "t.csv")]) == 2
        assert error_payload(capsys.readouterr().err)["field"] == "landmarks"

    def test_unknown_model(self, tmp_path, capsys):
        """Test an unknown model id exits 2."""
        config = write_config(tmp_path, model={"id": "pendulum"})
        assert main(["simulate", "--config", config, "--out", str(tmp_path / "t.csv")]) == 2
        assert error_payload(capsys.readouterr().err)["field"] == "model.id"

    def test_missing_config(self, tmp_path, capsys):
        """Test a missing document exits 2."""
        assert main(["simulate", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "t.csv")]) == 2

    def test_singular_runtime_failure(self, tmp_path, capsys):
        """Test a singular innovation covariance exits 3 and names the step."""
        config = write_config(
            tmp_path,
            model={"id": "range-bearing-2d", "params": {"motion_noise": [0.0, 0.0, 0.0], "obs_noise": [0.0, 0.0]}},
            initial_belief={"cov_diag": [0.0, 0.0, 0.0]},
        )
        assert main(["run", "--config", config, "--out", str(tmp_path / "r.csv"), "--filter", "ekf"]) == 3
        payload = error_payload(capsys.readouterr().err)
        assert payload["error"] == "SingularMatrixError"
        assert "at step 1" in payload["message"]

    def test_output_path_is_directory(self, tmp_path, capsys):
        """Test an unwritable --out exits 2 with a JSON error naming the field."""
        out_dir = tmp_path / "reports"
        out_dir.mkdir()
        config = str(SCENARIO_DIR / "linear-1d.json")
        assert main(["run", "--config", config, "--out", str(out_dir)]) == 2
        payload = error_payload(capsys.readouterr().err)
        assert payload["error"] == "ConfigError"
        assert payload["field"] == "out"
        assert payload["exit_code"] == 2

    def test_output_parent_is_file(self, tmp_path, capsys):
        """Test a --out below an existing file exits 2 for simulate too."""
        blocker = tmp_path / "blocker"
        blocker.write_text("", encoding="utf-8")
        out = blocker / "traj.csv"
        assert main(["simulate", "--config", write_config(tmp_path), "--out", str(out)]) == 2
        assert error_payload(capsys.readouterr().err)["field"] == "out"

    def test_linear_zero_observation_noise(self, tmp_path, capsys):
        """Test a zero observation variance on a linear model names the document key."""
        config = write_config(tmp_path, model={"id": "linear-1d", "params": {"obs_noise": [0.0]}})
        assert main(["run", "--config", config, "--out", str(tmp_path / "r.csv")]) == 2
        assert error_payload(capsys.readouterr().err)["field"] == "model.params.obs_noise"

    def test_missing_required_argument(self):
        """Test argparse rejects a missing --out with exit status 2."""
        with pytest.raises(SystemExit) as excinfo:
            main(["run", "--config", "x.json"])
        assert excinfo.value.code == 2
