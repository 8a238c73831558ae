"""JSON problem files.

    {
      "schema_version": "1",
      "mode": "gaussian" | "minimax",
      "decision_dims": [m_1, ...],
      "measurement_maps": [C_1, ...],
      "objective": {"q": ..., "s": ..., "r": ...},
      "constraints": [{"form": {...}, "bound": g, "name": "..."}],
      "state_cov": V_xx,            # gaussian only
      "noise_cov": V_vv             # optional
    }

Matrices are row-major nested arrays.  Numbers may be JSON numbers or
decimal strings.  Unknown keys are rejected with their key path.
"""

from __future__ import annotations

import hashlib
import json
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from .core import GAUSSIAN, MINIMAX, GaussianStatistics, InformationStructure, QuadraticForm, TeamProblem

SCHEMA_VERSION = "1"

_TOP_KEYS = {"schema_version", "mode", "decision_dims", "measurement_maps", "objective", "constraints",
             "state_cov", "noise_cov", "description"}
_FORM_KEYS = {"q", "s", "r"}
_CONSTRAINT_KEYS = {"form", "bound", "name"}


class ProblemFileError(ValueError):
    def __init__(self, path: str, message: str):
        self.key_path = path
        super().__init__(f"{path}: {message}" if path else message)


def _number(value, path: str) -> float:
    if isinstance(value, bool):
        raise ProblemFileError(path, "expected a number, got a boolean")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        try:
            out = float(Decimal(value.strip()))
        except InvalidOperation:
            raise ProblemFileError(path, f"not a decimal number: {value!r}") from None
    else:
        raise ProblemFileError(path, f"expected a number, got {type(value).__name__}")
    if not np.isfinite(out):
        raise ProblemFileError(path, "number is not finite")
    return out


def _matrix(value, path: str, shape: tuple | None = None) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ProblemFileError(path, "expected a non-empty list of rows")
    rows = []
    width = None
    for i, row in enumerate(value):
        if not isinstance(row, list):
            raise ProblemFileError(f"{path}[{i}]", "expected a list of numbers")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ProblemFileError(f"{path}[{i}]", f"row has {len(row)} entries, expected {width}")
        rows.append([_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    if width == 0:
        raise ProblemFileError(path, "rows must not be empty")
    out = np.array(rows, dtype=float)
    if shape is not None and out.shape != shape:
        raise ProblemFileError(path, f"has shape {out.shape}, expected {shape}")
    return out


def _check_keys(obj, allowed: set, path: str, required: set = frozenset()) -> None:
    if not isinstance(obj, dict):
        raise ProblemFileError(path, "expected an object")
    for key in obj:
        if key not in allowed:
            raise ProblemFileError(f"{path}.{key}" if path else key, "unknown field")
    for key in sorted(required):
        if key not in obj:
            raise ProblemFileError(f"{path}.{key}" if path else key, "missing required field")


def _form(obj, path: str, n: int, m: int) -> QuadraticForm:
    _check_keys(obj, _FORM_KEYS, path, _FORM_KEYS)
    return QuadraticForm(_matrix(obj["q"], f"{path}.q", (n, n)),
                         _matrix(obj["s"], f"{path}.s", (n, m)),
                         _matrix(obj["r"], f"{path}.r", (m, m)))


def parse_problem(data: dict, mode_override: str | None = None) -> TeamProblem:
    required = {"schema_version", "mode", "decision_dims", "measurement_maps", "objective"}
    _check_keys(data, _TOP_KEYS, "", required)
    if str(data["schema_version"]) != SCHEMA_VERSION:
        raise ProblemFileError("schema_version", f"unsupported version {data['schema_version']!r}")
    mode = mode_override or data["mode"]
    if mode not in (GAUSSIAN, MINIMAX):
        raise ProblemFileError("mode", f"expected 'gaussian' or 'minimax', got {mode!r}")

    dims = data["decision_dims"]
    if not isinstance(dims, list) or not dims:
        raise ProblemFileError("decision_dims", "expected a non-empty list")
    for i, d in enumerate(dims):
        if isinstance(d, bool) or not isinstance(d, int) or d < 1:
            raise ProblemFileError(f"decision_dims[{i}]", "expected a positive integer")
    maps = data["measurement_maps"]
    if not isinstance(maps, list) or len(maps) != len(dims):
        raise ProblemFileError("measurement_maps", f"expected a list of {len(dims)} matrices")
    cs = [_matrix(c, f"measurement_maps[{i}]") for i, c in enumerate(maps)]
    n = cs[0].shape[1]
    for i, c in enumerate(cs):
        if c.shape[1] != n:
            raise ProblemFileError(f"measurement_maps[{i}]", f"has {c.shape[1]} columns, expected {n}")
    info = InformationStructure(tuple(dims), tuple(cs))
    m, p = info.m, info.p

    objective = _form(data["objective"], "objective", n, m)
    constraints = []
    raw = data.get("constraints", [])
    if not isinstance(raw, list):
        raise ProblemFileError("constraints", "expected a list")
    for j, item in enumerate(raw):
        path = f"constraints[{j}]"
        _check_keys(item, _CONSTRAINT_KEYS, path, {"form", "bound"})
        constraints.append((_form(item["form"], f"{path}.form", n, m), _number(item["bound"], f"{path}.bound")))

    stats = None
    if mode == GAUSSIAN:
        if "state_cov" not in data:
            raise ProblemFileError("state_cov", "required in gaussian mode")
        noise = _matrix(data["noise_cov"], "noise_cov", (p, p)) if "noise_cov" in data else None
        stats = GaussianStatistics(_matrix(data["state_cov"], "state_cov", (n, n)), noise)
    return TeamProblem(objective, tuple(constraints), info, stats, mode)


def load_problem(path, mode_override: str | None = None) -> tuple[TeamProblem, str]:
    """Parse a problem file; returns the problem and the sha256 of its bytes."""
    raw = Path(path).read_bytes()
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProblemFileError("", f"not valid JSON: {exc}") from None
    return parse_problem(data, mode_override), "sha256:" + hashlib.sha256(raw).hexdigest()


def _rows(a: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(a)]


def _form_dict(form: QuadraticForm) -> dict:
    return {"q": _rows(form.q), "s": _rows(form.s), "r": _rows(form.r)}


def problem_to_dict(problem: TeamProblem, description: str | None = None) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "mode": problem.mode}
    if description:
        out["description"] = description
    out["decision_dims"] = list(problem.info.decision_dims)
    out["measurement_maps"] = [_rows(c) for c in problem.info.measurement_maps]
    out["objective"] = _form_dict(problem.objective)
    out["constraints"] = [{"form": _form_dict(f), "bound": g} for f, g in problem.constraints]
    if problem.stats is not None:
        out["state_cov"] = _rows(problem.stats.state_cov)
        if problem.stats.noise_cov is not None:
            out["noise_cov"] = _rows(problem.stats.noise_cov)
    return out
