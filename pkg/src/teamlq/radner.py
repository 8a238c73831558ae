"""Unconstrained Gaussian team problems.

With x ~ N(0, V_xx), y_i = C_i x + v_i and u_i = K_i y_i the expected cost
is a convex quadratic in the blocks K_i.  Setting its gradient to zero
gives a coupled linear system in the stacked coefficients, solved here
directly.  The separation heuristic (each player estimates x, then applies
the full-information gain) is provided as a baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .core import GAUSSIAN, DecisionGain, ProblemError, QuadraticForm, TeamProblem, check


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class TeamLinearSystem:
    """matrix @ vec(K) = rhs over row-major stacked block coefficients."""

    matrix: np.ndarray
    rhs: np.ndarray


def _require_gaussian(problem: TeamProblem) -> None:
    if problem.mode != GAUSSIAN or problem.stats is None:
        raise ProblemError(["problem must be in gaussian mode with statistics"])


def full_information_gain(objective: QuadraticForm) -> np.ndarray:
    """L solving r L = -s^T, the optimal gain when u sees all of x."""
    try:
        return linalg.solve_spd(objective.r, -objective.s.T)
    except linalg.NotPositiveDefiniteError as exc:
        raise ValueError("objective r is not positive definite") from exc


def measurement_cov(problem: TeamProblem) -> np.ndarray:
    """E[y y^T] = C V_xx C^T + V_vv."""
    c = problem.info.stacked_c()
    return linalg.symmetrize(c @ problem.stats.state_cov @ c.T + problem.stats.noise(problem.info.p))


def build_team_system(problem: TeamProblem) -> TeamLinearSystem:
    """Stationarity conditions of the expected cost in the gain coefficients.

    The gradient with respect to K_i is

        2 sum_j R_ij K_j Lam_ji + 2 [S^T]_i V_xx C_i^T,

    with R = Q_uu, S = Q_xu and Lam = E[y y^T].  In row-major vec form
    vec(R_ij K_j Lam_ji) = (R_ij kron Lam_ij) vec(K_j), which fills block
    (i, j) of the matrix.
    """
    _require_gaussian(problem)
    info = problem.info
    r, s = problem.objective.r, problem.objective.s
    lam = measurement_cov(problem)
    v = problem.stats.state_cov
    ds, ms = info.decision_slices(), info.measurement_slices()
    sizes = [mi * pi for mi, pi in zip(info.decision_dims, info.measurement_dims)]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    a = np.zeros((offsets[-1], offsets[-1]))
    b = np.zeros(offsets[-1])
    for i in range(info.num_players):
        for j in range(info.num_players):
            a[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] = np.kron(r[ds[i], ds[j]], lam[ms[i], ms[j]])
        ci = info.measurement_maps[i]
        b[offsets[i]:offsets[i + 1]] = (-s[:, ds[i]].T @ v @ ci.T).ravel()
    return TeamLinearSystem(linalg.symmetrize(a), b)


def solve_unconstrained(problem: TeamProblem) -> DecisionGain:
    """Optimal block gains for the expected objective (no constraints)."""
    check(problem)
    system = build_team_system(problem)
    try:
        z = linalg.solve_spd(system.matrix, system.rhs)
    except linalg.NotPositiveDefiniteError:
        raise SingularSystemError(_deficiency(problem, system.matrix)) from None
    return DecisionGain.from_coefficients(z, problem.info)


def _deficiency(problem: TeamProblem, a: np.ndarray) -> str:
    info = problem.info
    sizes = [mi * pi for mi, pi in zip(info.decision_dims, info.measurement_dims)]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    worst = None
    for i in range(info.num_players):
        for j in range(i, info.num_players):
            idx = np.r_[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] if i != j else np.r_[offsets[i]:offsets[i + 1]]
            lam = np.linalg.eigvalsh(a[np.ix_(idx, idx)])[0]
            if worst is None or lam < worst[0]:
                worst = (lam, i, j)
    _, i, j = worst
    return (f"team system is singular (players {i + 1} and {j + 1} are degenerate); "
            "add measurement noise or regularize the statistics")


def expected_cost(problem: TeamProblem, gain: DecisionGain, form: QuadraticForm | None = None) -> float:
    """E[(x, u)^T M (x, u)] for u = K (C x + v), in closed form."""
    _require_gaussian(problem)
    form = problem.objective if form is None else form
    k = gain.assemble(problem.info)
    c = problem.info.stacked_c()
    v = problem.stats.state_cov
    lam = measurement_cov(problem)
    return float(np.trace(form.q @ v) + 2.0 * np.trace(form.s @ k @ c @ v) + np.trace(form.r @ k @ lam @ k.T))


def cost_gradient(problem: TeamProblem, gain: DecisionGain, form: QuadraticForm | None = None) -> DecisionGain:
    """Gradient of expected_cost with respect to each block K_i."""
    _require_gaussian(problem)
    form = problem.objective if form is None else form
    info = problem.info
    k = gain.assemble(info)
    c = info.stacked_c()
    full = 2.0 * (form.s.T @ problem.stats.state_cov @ c.T + form.r @ k @ measurement_cov(problem))
    return DecisionGain(tuple(full[rs, cs] for rs, cs in zip(info.decision_slices(), info.measurement_slices())))


def estimate_then_act(problem: TeamProblem) -> DecisionGain:
    """Each player applies its rows of L to its own MMSE estimate of x."""
    check(problem)
    info = problem.info
    l = full_information_gain(problem.objective)
    v = problem.stats.state_cov
    noise = problem.stats.noise(info.p)
    blocks = []
    for rs, ms, ci in zip(info.decision_slices(), info.measurement_slices(), info.measurement_maps):
        innovation = ci @ v @ ci.T + noise[ms, ms]
        try:
            # x_hat_i = V C_i^T (C_i V C_i^T + V_ii)^-1 y_i
            estimator = linalg.solve_spd(innovation, ci @ v).T
        except linalg.NotPositiveDefiniteError:
            raise SingularSystemError("measurement covariance of a player is singular") from None
        blocks.append(l[rs] @ estimator)
    return DecisionGain(tuple(blocks))


def orthogonality_residual(problem: TeamProblem, gain: DecisionGain) -> float:
    """max |E[(u - L x)^T Q_uu f]| over single-entry directions f = E_rc y.

    Zero exactly when u = K y is the projection of L x onto the linear
    decisions allowed by the information structure.
    """
    _require_gaussian(problem)
    info = problem.info
    l = full_information_gain(problem.objective)
    k = gain.assemble(info)
    c = info.stacked_c()
    v = problem.stats.state_cov
    # E[(K y - L x) y^T] = K Lam - L V C^T
    cross = problem.objective.r @ (k @ measurement_cov(problem) - l @ v @ c.T)
    return max(float(np.max(np.abs(cross[rs, cs])))
               for rs, cs in zip(info.decision_slices(), info.measurement_slices()))
