"""Command-line interface.

Usage:
    teamlq solve PROBLEM.json [--out REPORT.json] [--mode gaussian|minimax] [--tol T] [--max-iter N]
    teamlq minimax PROBLEM.json [--out REPORT.json] [--tol T]
    teamlq verify PROBLEM.json REPORT.json [--samples N] [--seed S]
    teamlq dump-sdp PROBLEM.json [--gamma G] [--out FILE]

Exit codes:
    0  optimal / feasible / verified
    1  unreadable or invalid input
    2  infeasible
    3  solver did not converge (or bisection bracket failure)
    4  verification found mismatches
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, constrained, minimax, oracle, radner, sdp
from .core import GAUSSIAN, MINIMAX, DecisionGain, ProblemError
from .problem_file import ProblemFileError, load_problem

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NONCONVERGED, EXIT_MISMATCH = 0, 1, 2, 3, 4

DEFAULT_SEED = 20240601

TOLERANCES = {
    "radner": {"value_rel": 1e-9, "stationarity": 1e-8, "feasibility": 0.0, "slackness": 0.0, "mc_sigmas": 4.0},
    "constrained": {"value_rel": 1e-7, "stationarity": 1e-4, "feasibility": 1e-7, "slackness": 1e-5,
                    "mc_sigmas": 4.0},
    "minimax": {"value_abs": 1e-8},
}


class _InputError(Exception):
    pass


def _gain_json(gain: DecisionGain) -> list:
    return [[[float(v) for v in row] for row in b] for b in gain.blocks]


def _write_atomic(path: str, text: str) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=str(target.parent.resolve()))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        _write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _load(path: str, mode: str | None = None):
    try:
        return load_problem(path, mode)
    except OSError as exc:
        raise _InputError(f"{path}: {exc.strerror or exc}") from None
    except (ProblemFileError, ValueError) as exc:
        raise _InputError(f"{path}: {exc}") from None


def _base_report(solver: str, digest: str) -> dict:
    return {"tool": "teamlq", "tool_version": __version__, "solver": solver, "inputs_digest": digest}


def _solve_gaussian(problem, digest, args) -> tuple[dict, int]:
    if not problem.constraints:
        gain = radner.solve_unconstrained(problem)
        grad = radner.cost_gradient(problem, gain)
        report = _base_report("radner", digest)
        report.update({
            "status": "optimal",
            "gain": _gain_json(gain),
            "objective_value": radner.expected_cost(problem, gain),
            "constraint_values": [],
            "multipliers": [],
            "residuals": {
                "orthogonality": radner.orthogonality_residual(problem, gain),
                "stationarity": max(float(np.max(np.abs(b))) for b in grad.blocks),
            },
            "tolerances": TOLERANCES["radner"],
        })
        return report, EXIT_OK

    settings = sdp.SdpSettings(gap_tol=args.tol or 1e-10, max_iter=args.max_iter)
    sol = constrained.solve_constrained(problem, settings)
    report = _base_report("constrained", digest)
    report["status"] = sol.status
    if sol.status == sdp.INFEASIBLE:
        return report, EXIT_INFEASIBLE
    gap = constrained.dual_gap_report(problem, sol)
    report.update({
        "gain": _gain_json(sol.gain),
        "objective_value": radner.expected_cost(problem, sol.gain),
        "sdp_objective": sol.objective_value,
        "constraint_values": sol.constraint_values,
        "bounds": problem.bounds,
        "multipliers": sol.multipliers,
        "residuals": {
            "sdp_primal_infeasibility": sol.sdp_solution.residuals[0],
            "sdp_dual_infeasibility": sol.sdp_solution.residuals[1],
            "sdp_gap": sol.sdp_solution.residuals[2],
            "complementary_slackness": gap.complementary_slackness,
            "stationarity": gap.stationarity,
            "lagrangian": gap.lagrangian,
        },
        "sdp_iterations": sol.sdp_solution.iterations,
        "tolerances": TOLERANCES["constrained"],
    })
    return report, EXIT_OK if sol.status == sdp.OPTIMAL else EXIT_NONCONVERGED


def _solve_minimax(problem, digest, tol) -> tuple[dict, int]:
    report = _base_report("minimax", digest)
    try:
        sol = minimax.solve_problem(problem, tol=tol)
    except minimax.BracketError as exc:
        report["status"] = "bracket_failure"
        report["message"] = str(exc)
        return report, EXIT_NONCONVERGED
    report.update({
        "status": "feasible",
        "label": "optimal linear decision",
        "game_value": sol.game_value,
        "tol": sol.tol,
        "gain": _gain_json(sol.gain),
        "certificate_margin": sol.certificate_margin,
        "bisection_trace": [[g, f] for g, f in sol.bisection_trace],
        "tolerances": TOLERANCES["minimax"],
    })
    return report, EXIT_OK


def _summary(report: dict) -> str:
    lines = [f"solver: {report['solver']}  status: {report['status']}"]
    if "gain" in report:
        for i, b in enumerate(report["gain"]):
            lines.append(f"  K{i + 1} = {np.array(b).tolist()}")
    for key in ("objective_value", "game_value", "certificate_margin"):
        if key in report:
            lines.append(f"  {key} = {report[key]:.10g}")
    if report.get("multipliers"):
        lines.append(f"  multipliers = {[round(v, 10) for v in report['multipliers']]}")
    return "\n".join(lines)


def cmd_solve(args) -> int:
    problem, digest = _load(args.problem, args.mode)
    start = time.perf_counter()
    if problem.mode == MINIMAX:
        report, code = _solve_minimax(problem, digest, args.tol or 1e-6)
    else:
        report, code = _solve_gaussian(problem, digest, args)
    report["timing"] = {"seconds": time.perf_counter() - start}
    _emit(report, args.out)
    if args.out:
        print(_summary(report))
    if code == EXIT_INFEASIBLE:
        print("error: problem is infeasible", file=sys.stderr)
    elif code == EXIT_NONCONVERGED:
        print(f"error: solver did not converge ({report['status']})", file=sys.stderr)
    return code


def cmd_minimax(args) -> int:
    problem, digest = _load(args.problem, MINIMAX)
    start = time.perf_counter()
    report, code = _solve_minimax(problem, digest, args.tol)
    report["timing"] = {"seconds": time.perf_counter() - start}
    _emit(report, args.out)
    if args.out:
        print(_summary(report))
    if code != EXIT_OK:
        print(f"error: {report.get('message', report['status'])}", file=sys.stderr)
    return code


def _check(results: list, name: str, value: float, limit: float) -> None:
    results.append((name, value, limit, bool(np.isfinite(value) and value <= limit)))


def _verify_gaussian(problem, report, samples, seed) -> list:
    tol = report["tolerances"]
    gain = DecisionGain(tuple(np.array(b, dtype=float) for b in report["gain"]))
    results = []
    objective = radner.expected_cost(problem, gain)
    scale = 1.0 + abs(objective)
    _check(results, "objective_value", abs(objective - report["objective_value"]), tol["value_rel"] * scale)

    lam = report.get("multipliers", [])
    grad = constrained.lagrangian_gradient(problem, gain, lam)
    stationarity = max(float(np.max(np.abs(b))) for b in grad.blocks)
    _check(results, "stationarity", stationarity, tol["stationarity"] * scale)

    forms = [problem.objective]
    for j, (form, bound) in enumerate(problem.constraints):
        value = radner.expected_cost(problem, gain, form)
        bscale = 1.0 + abs(bound)
        _check(results, f"constraint[{j}].value", abs(value - report["constraint_values"][j]),
               tol["value_rel"] * bscale)
        _check(results, f"constraint[{j}].feasibility", max(0.0, value - bound), tol["feasibility"] * bscale)
        _check(results, f"constraint[{j}].slackness", abs(lam[j] * (value - bound)), tol["slackness"] * scale)
        _check(results, f"constraint[{j}].multiplier_sign", max(0.0, -lam[j]), 1e-9)
        forms.append(form)

    estimates = oracle.mc_expected_costs(problem, oracle.linear_policy(gain), forms, samples, seed)
    closed = [objective] + [radner.expected_cost(problem, gain, f) for f, _ in problem.constraints]
    for j, (est, exact) in enumerate(zip(estimates, closed)):
        name = "monte_carlo.objective" if j == 0 else f"monte_carlo.constraint[{j - 1}]"
        _check(results, name, abs(est.mean - exact), tol["mc_sigmas"] * est.std_error)
    return results


def _verify_minimax(problem, report) -> list:
    gain = DecisionGain(tuple(np.array(b, dtype=float) for b in report["gain"]))
    gamma, tol = report["game_value"], report["tol"]
    slack = report["tolerances"]["value_abs"]
    info = problem.info
    results = []
    ratio = oracle.congruence_max_eig(problem.objective, gain, info)
    _check(results, "worst_case_ratio", ratio - (gamma + 2 * tol), slack)
    for j, (form, bound) in enumerate(problem.constraints):
        _check(results, f"constraint[{j}].worst_case", oracle.congruence_max_eig(minimax.fold_bound(form, bound),
                                                                            gain, info), slack)
    folded = [minimax.fold_bound(f, g) for f, g in problem.constraints]
    below = minimax.lmi_feasibility([problem.objective.shifted(gamma - 2 * tol)] + folded, info)
    _check(results, "value_lower_bracket", float(below.feasible), 0.0)
    return results


def cmd_verify(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise _InputError(f"{args.report}: cannot read report ({exc})") from None
    solver = report.get("solver")
    problem, digest = _load(args.problem, MINIMAX if solver == "minimax" else None)
    if report.get("inputs_digest") != digest:
        print(f"warning: report digest {report.get('inputs_digest')} does not match {digest}", file=sys.stderr)
    seed = args.seed if args.seed is not None else int(os.environ.get("TEAMLQ_SEED", DEFAULT_SEED))
    if "gain" not in report:
        raise _InputError(f"{args.report}: report has no gain (status {report.get('status')})")
    if solver == "minimax":
        results = _verify_minimax(problem, report)
    elif solver in ("radner", "constrained") and problem.mode == GAUSSIAN:
        results = _verify_gaussian(problem, report, args.samples, seed)
    else:
        raise _InputError(f"{args.report}: unknown solver {solver!r}")
    failed = [r for r in results if not r[3]]
    for name, value, limit, ok in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.6e} (limit {limit:.6e})")
    if solver != "minimax":
        print(f"monte carlo: seed {seed}, samples {args.samples}")
    if failed:
        print("failed checks: " + ", ".join(r[0] for r in failed), file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_dump_sdp(args) -> int:
    problem, _ = _load(args.problem)
    if problem.mode == GAUSSIAN:
        text = sdp.dump(constrained.build_sdp(problem).problem)
    else:
        folded = [minimax.fold_bound(f, g) for f, g in problem.constraints]
        text = sdp.dump(minimax.build_lmi([problem.objective.shifted(args.gamma)] + folded, problem.info))
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="teamlq", description="Linear-quadratic team decision solver",
                                     formatter_class=argparse.RawDescriptionHelpFormatter, epilog=__doc__)
    parser.add_argument("--version", action="version", version=f"teamlq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem file")
    p.add_argument("problem")
    p.add_argument("--mode", choices=[GAUSSIAN, MINIMAX], default=None, help="override the file's mode")
    p.add_argument("--out", default=None, help="write the JSON report here (default: stdout)")
    p.add_argument("--tol", type=float, default=None, help="SDP gap tolerance / bisection tolerance")
    p.add_argument("--max-iter", type=int, default=200)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("minimax", help="worst-case game value by bisection")
    p.add_argument("problem")
    p.add_argument("--out", default=None)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_minimax)

    p = sub.add_parser("verify", help="re-check a report against closed forms and Monte Carlo")
    p.add_argument("problem")
    p.add_argument("report")
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=None, help="default: $TEAMLQ_SEED or a fixed seed")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("dump-sdp", help="print the SDP built for a problem (debugging)")
    p.add_argument("problem")
    p.add_argument("--gamma", type=float, default=0.0, help="objective shift for minimax problems")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dump_sdp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ProblemError as exc:
        print(f"error: invalid problem: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except radner.SingularSystemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
