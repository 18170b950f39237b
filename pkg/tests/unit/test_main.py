# tests/unit/test_main.py
"""
Command-line tests for the kfrac entry point
"""

import json

import pytest

from services.harness.main import main
from services.harness.report import parse_csv, read_report

QUIET = ["--log-level", "WARNING"]


def last_json_line(text: str) -> dict:
    return json.loads([line for line in text.splitlines() if line.strip()][-1])


class TestKernels:

    def test_first_level_kernel(self, capsys):
        assert main(QUIET + ["kernels", "--alpha", "0.5", "--steps", "2", "--delta", "1", "--level", "1"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "n,j,k_nj"
        n, j, k = lines[1].split(",")
        assert (n, j) == ("1", "1")
        # 0.5^{-1/2} / Gamma(3/2)
        assert float(k) == pytest.approx(1.5957691216057308, rel=1e-14)

    def test_all_levels(self, capsys):
        assert main(QUIET + ["kernels", "--alpha", "0.3", "--steps", "3", "--delta-optimal"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 1 + (1 + 2 + 3)

    def test_requires_delta(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["kernels", "--alpha", "0.5", "--steps", "2"])
        assert exc_info.value.code == 2


class TestSolve:

    def test_small_solve(self, capsys):
        code = main(QUIET + ["solve", "--example", "5.2", "--alpha", "0.5", "--delta-optimal",
                             "--grid", "4", "--steps", "4"])
        assert code == 0
        rows = parse_csv(capsys.readouterr().out)
        assert len(rows) == 1
        assert rows[0]["P"] == 4 and rows[0]["delta"] == 3.0
        assert rows[0]["l2_error"] > 0 and rows[0]["l2_rate"] is None

    def test_json_output(self, tmp_path):
        out = tmp_path / "solve.json"
        assert main(QUIET + ["solve", "--example", "kirchhoff-sin", "--alpha", "0.4", "--delta", "2",
                             "--grid", "4", "--steps", "3", "--format", "json", "--out", str(out)]) == 0
        report = read_report(out)
        assert report.problem == "kirchhoff-sin"
        assert report.rows[0].N == 3

    def test_memory_closure_flag(self, tmp_path):
        out = tmp_path / "solve.json"
        assert main(QUIET + ["solve", "--example", "5.2", "--alpha", "0.5", "--delta-optimal", "--grid", "4",
                             "--steps", "4", "--memory-closure", "explicit", "--format", "json", "--out", str(out)]) == 0
        assert read_report(out).metadata["memory_closure"] == "explicit"

    def test_unknown_memory_closure(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["solve", "--example", "5.2", "--alpha", "0.5", "--delta", "1", "--grid", "4", "--steps", "3",
                  "--memory-closure", "midpoint"])
        assert exc_info.value.code == 2

    def test_long_run_needs_flag(self, capsys):
        code = main(QUIET + ["solve", "--example", "5.1", "--alpha", "0.5", "--delta", "1",
                             "--grid", "4", "--steps", "300000"])
        assert code == 1
        error = last_json_line(capsys.readouterr().err)
        assert error["error_code"] == "CONFIG_ERROR"
        assert error["details"]["key"] == "allow_long"

    def test_solver_domain_error(self, capsys):
        code = main(QUIET + ["solve", "--example", "5.1", "--alpha", "1.5", "--delta", "1",
                             "--grid", "4", "--steps", "3"])
        assert code == 1
        assert last_json_line(capsys.readouterr().err)["error_code"] == "PARAMETER_DOMAIN_ERROR"

    def test_unknown_example(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["solve", "--example", "5.3", "--alpha", "0.5", "--delta", "1", "--grid", "4", "--steps", "3"])
        assert exc_info.value.code == 2


class TestStudy:

    def test_config_file_with_plot(self, tmp_path):
        config = tmp_path / "study.cfg"
        config.write_text("problem = kirchhoff-sin\nalpha = 0.5\ngrids = 4, 8\nsteps = 8\n")
        out, plot = tmp_path / "study.csv", tmp_path / "study.svg"
        code = main(QUIET + ["study", "--config", str(config), "--out", str(out), "--plot", str(plot)])
        assert code == 0
        rows = parse_csv(out.read_text())
        assert [row["P"] for row in rows] == [4, 8]
        assert rows[1]["l2_rate"] is not None
        assert 'id="series-0"' in plot.read_text()

    def test_overrides_without_file(self, capsys):
        code = main(QUIET + ["study", "--problem", "5.2", "--alphas", "0.5", "--grids", "4,8",
                             "--steps", "6", "--format", "json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["problem"] == "kirchhoff-poly"
        assert "wall_time" not in payload
        assert payload["metadata"]["memory_closure"] == "implicit"

    def test_bad_config_exits_with_error_json(self, tmp_path, capsys):
        config = tmp_path / "bad.cfg"
        config.write_text("problem = kirchhoff-sin\ngird = 9\n")
        assert main(QUIET + ["study", "--config", str(config)]) == 1
        error = last_json_line(capsys.readouterr().err)
        assert error["error_code"] == "CONFIG_ERROR"
        assert error["details"] == {"line": 2, "key": "gird"}

    def test_config_and_preset_are_exclusive(self, tmp_path):
        with pytest.raises(SystemExit) as exc_info:
            main(["study", "--config", str(tmp_path / "x.cfg"), "--preset", "table-1"])
        assert exc_info.value.code == 2
