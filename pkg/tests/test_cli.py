import csv
import json
import subprocess
import sys

import pytest

from conicpen.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--json")
    return code, json.loads(out)


class TestSolve:
    def test_eq_circle(self, capsys):
        code, res = run_json(capsys, "solve", "eq-circle")
        assert code == 0
        assert res["status"] == "ok"
        assert res["kkt"]["pass"]
        assert res["x"] == pytest.approx([-1.0, -1.0], abs=1e-5)
        assert res["lambda"] == pytest.approx([0.5], abs=1e-5)

    def test_degenerate(self, capsys):
        code, res = run_json(capsys, "solve", "licq-fail")
        assert code == 3
        assert res["status"] == "regularity-suspect"

    def test_missing_file(self, capsys):
        code, out, err = run(capsys, "solve", "missing.json")
        assert code == 1
        assert "file not found" in err
        assert json.loads(out)["status"] == "error"

    def test_cap_without_convergence(self, capsys):
        code, res = run_json(capsys, "solve", "eq-circle", "--max-outer", "1")
        assert code == 2
        assert res["status"] == "no-converge"
        assert not res["kkt"]["pass"]

    def test_parse_error_has_offset(self, capsys, tmp_path):
        f = tmp_path / "bad.json"
        f.write_text(json.dumps({"n": 1, "objective": "x1 * ", "constraints": [],
                                 "cone": {"type": "zero", "dim": 0}}))
        code, _, err = run(capsys, "solve", str(f))
        assert code == 1
        assert "offset 5" in err

    def test_dimension_mismatch(self, capsys, tmp_path):
        f = tmp_path / "bad.json"
        f.write_text(json.dumps({"n": 1, "objective": "x1", "constraints": ["x1"],
                                 "cone": {"type": "lorentz", "dim": 2}}))
        code, _, err = run(capsys, "solve", str(f))
        assert code == 1
        assert "cone dimension" in err

    def test_start_point_override(self, capsys):
        code, res = run_json(capsys, "solve", "soc-min", "--x0", "1,1")
        assert code == 0
        assert res["lambda"] == pytest.approx([-1.0, 0.0], abs=1e-5)

    def test_trace_files(self, capsys, tmp_path):
        path = tmp_path / "out.csv"
        code, res = run_json(capsys, "solve", "mixed", "--trace", str(path))
        assert code == 0
        assert res["trace"] == str(path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["k", "stationarity", "feasibility", "complementarity",
                           "dual_feasibility", "phi", "inner_iters"]
        assert len(rows) - 1 == res["outer_iterations"]
        side = json.loads(path.with_suffix(".json").read_text())
        assert side["iterations"][-1]["x"] == res["x"]
        assert side["iterations"][-1]["lambda"] == res["lambda"]

    def test_byte_identical_output(self, capsys, tmp_path):
        outputs = []
        for name in ("a.csv", "b.csv"):
            code, out, _ = run(capsys, "solve", "mixed", "--json", "--trace", str(tmp_path / name))
            outputs.append(out.replace(name, ""))
        assert outputs[0] == outputs[1]
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestReplay:
    def test_eq_circle(self, capsys):
        code, res = run_json(capsys, "replay", "eq-circle")
        assert code == 0
        assert abs(res["lambda"][0] - 0.5) <= 1e-3
        assert res["summary"]["max_phi_minus_fbar"] <= 1e-6

    def test_inequality(self, capsys, tmp_path):
        path = tmp_path / "r.csv"
        code, res = run_json(capsys, "replay", "ineq-bound", "--trace", str(path))
        assert code == 0
        assert abs(res["lambda"][0] - 1.0) <= 1e-3
        side = json.loads(path.with_suffix(".json").read_text())
        assert all(row["lambda"][0] >= 0.0 for row in side["iterations"])

    def test_infeasible_anchor(self, capsys):
        code, _, err = run(capsys, "replay", "eq-circle", "--xbar", "0,0")
        assert code == 1
        assert "infeasible" in err

    def test_degenerate(self, capsys):
        code, res = run_json(capsys, "replay", "licq-fail")
        assert code == 3
        assert res["summary"]["multiplier_diverges"]

    def test_delta_and_schedule_flags(self, capsys):
        code, res = run_json(capsys, "replay", "eq-circle", "--delta", "0.25", "--max-outer", "3")
        assert res["summary"]["delta"] == 0.25
        assert res["summary"]["final_k"] == 100.0


class TestCheck:
    def test_pass(self, capsys):
        code, res = run_json(capsys, "check", "eq-circle", "--x", "-1,-1", "--lambda", "0.5")
        assert code == 0
        assert res["kkt"]["pass"]
        assert res["licq"]["verdict"]
        assert res["conic"]["verdict"]

    def test_fail(self, capsys):
        code, res = run_json(capsys, "check", "eq-circle", "--x", "-1,-1", "--lambda", "0")
        assert code != 0
        assert res["kkt"]["stationarity"] == pytest.approx(2 ** 0.5)

    def test_soc(self, capsys):
        code, res = run_json(capsys, "check", "soc-min", "--x", "0,0", "--lambda", "-1,0")
        assert code == 0
        assert res["licq"]["applicable"] is False

    def test_defaults_to_known_pair(self, capsys):
        code, res = run_json(capsys, "check", "psd-min")
        assert code == 0

    def test_dimension_mismatch(self, capsys):
        code, _, err = run(capsys, "check", "eq-circle", "--x", "-1,-1", "--lambda", "1,2")
        assert code == 1

    def test_bad_vector(self, capsys):
        code, _, err = run(capsys, "check", "eq-circle", "--x", "a,b", "--lambda", "1")
        assert code == 1
        assert "comma-separated" in err


class TestConeTest:
    def test_lorentz(self, capsys):
        code, res = run_json(capsys, "cone-test", "--cone", "lorentz:3", "--samples", "1000",
                             "--seed", "42")
        assert code == 0
        for key in ("recon", "orth", "characterization", "idempotence", "homogeneity", "lipschitz"):
            assert res["max_residuals"][key] <= 1e-8

    def test_zero(self, capsys):
        code, res = run_json(capsys, "cone-test", "--cone", "zero:2")
        assert code == 0
        assert res["max_residuals"]["orth"] == 0.0

    def test_psd(self, capsys):
        code, res = run_json(capsys, "cone-test", "--cone", "psd:3", "--samples", "500")
        assert code == 0
        assert res["max_residuals"]["recon"] == 0.0

    def test_unknown_type(self, capsys):
        code, _, err = run(capsys, "cone-test", "--cone", "cube:3")
        assert code == 1
        assert "unknown cone type" in err


class TestGradTest:
    def test_battery(self, capsys):
        code, res = run_json(capsys, "grad-test", "--samples", "100", "--seed", "1")
        assert code == 0
        assert res["max_rel_error"] <= 1e-5

    def test_single_expression(self, capsys):
        code, res = run_json(capsys, "grad-test", "--expr", "sin(x1)*x2", "--n", "2", "--x", "0,3")
        assert code == 0
        assert res["gradient"] == pytest.approx([3.0, 0.0])


def test_human_summary_on_stderr(capsys):
    code, out, err = run(capsys, "check", "soc-min")
    assert code == 0
    assert "KKT pass" in err
    json.loads(out)


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "conicpen.cli", "solve", "missing.json"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "file not found" in proc.stderr
