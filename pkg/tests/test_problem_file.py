import json
from pathlib import Path

import numpy as np
import pytest

from instances import example2, minimax_problem, random_problem
from teamlq.core import validate
from teamlq.problem_file import ProblemFileError, load_problem, parse_problem, problem_to_dict

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def _example2_dict():
    return problem_to_dict(example2())


def test_example2_parses_to_valid_problem():
    problem, digest = load_problem(PROBLEMS / "example2.json")
    assert validate(problem) == []
    assert digest.startswith("sha256:") and len(digest) == 7 + 64
    np.testing.assert_array_equal(problem.objective.r, [[2.0, 1.0], [1.0, 2.0]])


def test_round_trip_through_dict():
    rng = np.random.default_rng(0)
    for _ in range(10):
        p = random_problem(rng)
        q = parse_problem(json.loads(json.dumps(problem_to_dict(p))))
        np.testing.assert_array_equal(q.objective.matrix(), p.objective.matrix())
        np.testing.assert_array_equal(q.stats.state_cov, p.stats.state_cov)
        np.testing.assert_array_equal(q.info.stacked_c(), p.info.stacked_c())
        assert q.info.decision_dims == p.info.decision_dims


def test_decimal_strings_accepted():
    d = _example2_dict()
    d["objective"]["q"] = [["1.0"]]
    d["state_cov"] = [["1e0"]]
    p = parse_problem(d)
    assert p.objective.q[0, 0] == 1.0 and p.stats.state_cov[0, 0] == 1.0


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d["objective"]["r"].__setitem__(1, [1.0]), "objective.r[1]"),
    (lambda d: d.__setitem__("colour", 1), "colour"),
    (lambda d: d["objective"].__setitem__("t", [[0.0]]), "objective.t"),
    (lambda d: d["objective"]["q"][0].__setitem__(0, "one"), "objective.q[0][0]"),
    (lambda d: d.__setitem__("decision_dims", [1, 0]), "decision_dims[1]"),
    (lambda d: d.__setitem__("mode", "robust"), "mode"),
    (lambda d: d.__setitem__("schema_version", "9"), "schema_version"),
    (lambda d: d.pop("state_cov"), "state_cov"),
    (lambda d: d.__setitem__("constraints", [{"bound": 1.0}]), "constraints[0].form"),
    (lambda d: d["objective"]["q"][0].__setitem__(0, True), "objective.q[0][0]"),
])
def test_errors_name_the_key_path(mutate, path):
    d = _example2_dict()
    mutate(d)
    with pytest.raises(ProblemFileError) as err:
        parse_problem(d)
    assert err.value.key_path == path
    assert str(err.value).startswith(path)


def test_invalid_json_is_a_problem_file_error(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text("{not json")
    with pytest.raises(ProblemFileError):
        load_problem(f)


def test_minimax_mode_has_no_statistics():
    d = problem_to_dict(minimax_problem(example2().objective, example2().info))
    assert "state_cov" not in d
    assert parse_problem(d).stats is None
    assert parse_problem(_example2_dict(), mode_override="minimax").stats is None


@pytest.mark.parametrize("name", sorted(p.name for p in PROBLEMS.glob("*.json")))
def test_shipped_files_are_valid(name):
    problem, _ = load_problem(PROBLEMS / name)
    assert validate(problem) == []
