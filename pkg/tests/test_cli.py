import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from teamlq.cli import main

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def _solve(tmp_path, name, *extra):
    out = tmp_path / f"{name}.report.json"
    code = main(["solve", str(PROBLEMS / name), "--out", str(out), *extra])
    return code, (json.loads(out.read_text()) if out.exists() else None), out


def _strip_timing(report):
    return {k: v for k, v in report.items() if k != "timing"}


def test_solve_example2(tmp_path, capsys):
    code, report, _ = _solve(tmp_path, "example2.json")
    assert code == 0
    assert [b[0][0] for b in report["gain"]] == pytest.approx([0.2, 0.2], abs=1e-10)
    assert report["objective_value"] == pytest.approx(0.6, abs=1e-12)
    assert report["solver"] == "radner" and report["inputs_digest"].startswith("sha256:")
    assert "objective_value" in capsys.readouterr().out


def test_solve_power_constrained(tmp_path):
    code, report, _ = _solve(tmp_path, "example2_power.json")
    assert code == 0
    assert report["multipliers"][0] > 1e-4
    assert report["constraint_values"][0] == pytest.approx(0.08, abs=1e-8)


def test_solve_writes_stdout_without_out(capsys):
    assert main(["solve", str(PROBLEMS / "example2.json")]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "optimal"


def test_malformed_row_exits_1(tmp_path, capsys):
    d = json.loads((PROBLEMS / "example2.json").read_text())
    d["objective"]["r"][1] = [1.0]
    f = tmp_path / "bad.json"
    f.write_text(json.dumps(d))
    assert main(["solve", str(f)]) == 1
    err = capsys.readouterr().err
    assert "objective.r[1]" in err and len(err.strip().splitlines()) == 1


def test_missing_file_exits_1(tmp_path):
    assert main(["solve", str(tmp_path / "absent.json")]) == 1


def test_invalid_problem_exits_1(tmp_path, capsys):
    d = json.loads((PROBLEMS / "example2.json").read_text())
    d["objective"]["r"] = [[1.0, 0.0], [0.0, 0.0]]
    f = tmp_path / "singular.json"
    f.write_text(json.dumps(d))
    assert main(["solve", str(f)]) == 1
    assert "positive definite" in capsys.readouterr().err


def test_infeasible_exits_2(tmp_path, capsys):
    d = json.loads((PROBLEMS / "example2_power.json").read_text())
    d["constraints"][0]["bound"] = -1.0
    f = tmp_path / "infeasible.json"
    f.write_text(json.dumps(d))
    assert main(["solve", str(f), "--out", str(tmp_path / "r.json")]) == 2
    assert json.loads((tmp_path / "r.json").read_text())["status"] == "infeasible"
    assert "infeasible" in capsys.readouterr().err


def test_bracket_failure_exits_3(tmp_path):
    d = json.loads((PROBLEMS / "example1.json").read_text())
    d["constraints"][0]["bound"] = -1.0
    f = tmp_path / "bad_minimax.json"
    f.write_text(json.dumps(d))
    assert main(["minimax", str(f), "--out", str(tmp_path / "r.json")]) == 3


def test_minimax_reports(tmp_path):
    out = tmp_path / "m.json"
    assert main(["minimax", str(PROBLEMS / "example2_minimax.json"), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["game_value"] == pytest.approx(1 / 3, abs=1e-6)
    assert report["bisection_trace"] and report["certificate_margin"] > 0
    assert main(["minimax", str(PROBLEMS / "example1.json"), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["gain"][0][0][0] == pytest.approx(0.5, abs=1e-5)


@pytest.mark.parametrize("name", sorted(p.name for p in PROBLEMS.glob("*.json")))
def test_every_shipped_problem_round_trips(tmp_path, name):
    code, _, out = _solve(tmp_path, name)
    assert code == 0
    assert main(["verify", str(PROBLEMS / name), str(out), "--samples", "100000"]) == 0


def test_tampered_gain_names_stationarity(tmp_path, capsys):
    _, report, out = _solve(tmp_path, "example2.json")
    report["gain"][0][0][0] += 0.1
    out.write_text(json.dumps(report))
    capsys.readouterr()
    assert main(["verify", str(PROBLEMS / "example2.json"), str(out)]) == 4
    captured = capsys.readouterr()
    assert "stationarity" in captured.err
    assert "FAIL" in captured.out


def test_verify_output_is_deterministic(tmp_path, capsys):
    _, _, out = _solve(tmp_path, "example2.json")
    capsys.readouterr()
    args = ["verify", str(PROBLEMS / "example2.json"), str(out), "--samples", "1000000", "--seed", "7"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    assert "seed 7" in first


def test_seed_from_environment(tmp_path, capsys, monkeypatch):
    _, _, out = _solve(tmp_path, "example2.json")
    monkeypatch.setenv("TEAMLQ_SEED", "99")
    capsys.readouterr()
    main(["verify", str(PROBLEMS / "example2.json"), str(out), "--samples", "10000"])
    assert "seed 99" in capsys.readouterr().out


def test_reports_identical_modulo_timing(tmp_path):
    for name in ("example2.json", "example2_power.json", "example2_minimax.json"):
        _, a, _ = _solve(tmp_path, name)
        _, b, _ = _solve(tmp_path, name)
        assert _strip_timing(a) == _strip_timing(b)
        assert set(a["timing"]) == {"seconds"}


def test_atomic_write_leaves_no_temporaries(tmp_path):
    _solve(tmp_path, "example2.json")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["example2.json.report.json"]


def test_dump_sdp(tmp_path, capsys):
    assert main(["dump-sdp", str(PROBLEMS / "example2_power.json")]) == 0
    text = capsys.readouterr().out
    assert text.strip()
    assert main(["dump-sdp", str(PROBLEMS / "example2_minimax.json"), "--gamma", "0.5"]) == 0


def test_module_entry_point():
    env = dict(os.environ)
    out = subprocess.run([sys.executable, "-m", "teamlq", "--version"], capture_output=True, text=True, env=env)
    assert out.returncode == 0 and "teamlq" in out.stdout
