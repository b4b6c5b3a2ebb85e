import json

import numpy as np
import pytest

from predrep import cli, io


def _write(tmp_path, config):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return str(path)


class TestExitCodes:
    def test_success_prints_report(self, capsys):
        assert cli.main(["sr", "--seed", "3"]) == cli.EXIT_OK
        out, err = capsys.readouterr()
        report = json.loads(out)
        assert report["experiment"] == "sr" and report["config"]["seeds"] == [3]

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["sr", "--config", str(tmp_path / "none.json")]) == cli.EXIT_CONFIG

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert cli.main(["sr", "--config", str(path)]) == cli.EXIT_CONFIG

    def test_schema_violation(self, tmp_path):
        assert cli.main(["sr", "--config", _write(tmp_path, {"experiment": "sr", "seeds": "all"})]) == cli.EXIT_CONFIG

    def test_experiment_mismatch(self, tmp_path):
        assert cli.main(["sf", "--config", _write(tmp_path, {"experiment": "sr"})]) == cli.EXIT_CONFIG

    def test_runtime_config_error(self, tmp_path):
        config = {"experiment": "revaluation", "agents": [{"type": "MF", "params": {"beta": 1}}]}
        code = cli.main(["experiment", "revaluation", "--config", _write(tmp_path, config)])
        assert code == cli.EXIT_CONFIG

    def test_failed_check(self, tmp_path, capsys):
        config = {
            "experiment": "revaluation",
            "seeds": [0],
            "phases": {"learning_trials": 20, "revaluation_trials": 5},
            "params": {"threshold": 1.5},
        }
        path = _write(tmp_path, config)
        assert cli.main(["experiment", "revaluation", "--config", path]) == cli.EXIT_OK
        assert cli.main(["experiment", "revaluation", "--config", path, "--check"]) == cli.EXIT_CHECK
        assert "FAIL" in capsys.readouterr().err

    def test_passing_check(self):
        assert cli.main(["experiment", "replay", "--check"]) == cli.EXIT_OK

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["bogus"])
        assert exc.value.code == 2


class TestOutputs:
    def test_seed_override_replaces_config_seeds(self, tmp_path, capsys):
        path = _write(tmp_path, {"experiment": "multitask", "seeds": [5, 6], "params": {"random_worlds": 2}})
        assert cli.main(["experiment", "multitask", "--config", path, "--seed", "1"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert [r["seed"] for r in report["records"]] == [1]

    def test_json_to_directory(self, tmp_path):
        out = tmp_path / "run"
        assert cli.main(["sf", "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["experiment"] == "sf"

    def test_csv_tables(self, tmp_path):
        out = tmp_path / "run"
        assert cli.main(["sr", "--out", str(out), "--format", "csv"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert "tables" not in report
        csvs = sorted(out.glob("*.csv"))
        assert csvs
        matrix, meta = io.csv_to_matrix(csvs[0].read_text())
        assert np.all(np.isfinite(matrix))
        assert meta["shape"] == list(matrix.shape)

    def test_explore_csv(self, tmp_path):
        out = tmp_path / "explore"
        assert cli.main(["explore", "--seed", "0", "--out", str(out), "--format", "csv"]) == 0
        assert (out / "report.json").exists()
        assert len(list(out.glob("eig*.csv"))) == 4

    def test_gridworld_file_relative_to_config(self, tmp_path, capsys):
        (tmp_path / "room.txt").write_text("...\n.#.\n...\n")
        config = {"experiment": "sr", "environment": {"gamma": 0.5, "gridworld_file": "room.txt"}}
        assert cli.main(["sr", "--config", _write(tmp_path, config)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["experiment"] == "sr"

    def test_neuro_wall_cells_are_blank(self, tmp_path):
        out = tmp_path / "neuro"
        config = {"experiment": "neuro", "params": {"room": 6, "trapezoid": [6, 6, 2], "k": 2, "ring": 6}}
        assert cli.main(["neuro", "--config", _write(tmp_path, config), "--out", str(out), "--format", "csv"]) == 0
        matrix, _ = io.csv_to_matrix((out / "trapezoid_eig0.csv").read_text())
        assert np.isnan(matrix).any()
