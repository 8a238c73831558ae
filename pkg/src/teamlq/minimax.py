"""Deterministic (worst-case) team problems.

The team minimizes sup_x J(x, u) / |x|^2 with u_i = mu_i(C_i x).  For a
linear decision u = K C x, the requirement [x; KCx]^T M [x; KCx] <= 0 for
all x is the matrix inequality [I; KC]^T M [I; KC] <= 0, which a Schur
complement in R turns into an LMI affine in K.  The game value is found by
bisection on the shift Q -> Q - gamma I.

Linear decisions are not known to be optimal among all decisions in this
setting, so every result here is the optimal *linear* decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg, sdp
from .core import MINIMAX, DecisionGain, InformationStructure, ProblemError, QuadraticForm, TeamProblem, check

FEASIBLE_THRESHOLD = 1e-8
_SETTINGS = sdp.SdpSettings(gap_tol=1e-10)


class BracketError(RuntimeError):
    pass


@dataclass
class MinimaxSolution:
    """Optimal linear decision for the worst-case problem."""

    game_value: float
    gain: DecisionGain
    certificate_margin: float
    bisection_trace: list = field(default_factory=list)
    tol: float = 1e-6


@dataclass
class FeasibilityResult:
    feasible: bool
    gain: DecisionGain
    margin: float
    worst_block: int
    block_max_eigs: list


def _schur_parts(r: np.ndarray):
    """(left, corner) with left^T corner^-1 left = r; corner is r itself when r > 0."""
    lam = np.linalg.eigvalsh(r)
    norm = float(np.max(np.abs(lam))) if lam.size else 0.0
    if norm > 0 and lam[0] > linalg.PSD_TOL * norm:
        return r, r
    if norm == 0:
        return None, None
    f = linalg.psd_factor(r)
    return f, np.eye(f.shape[0])


def _basis_kc(info: InformationStructure) -> np.ndarray:
    c = info.stacked_c()
    out = []
    for rs, cs in zip(info.decision_slices(), info.measurement_slices()):
        for row in range(rs.start, rs.stop):
            for col in range(cs.start, cs.stop):
                e = np.zeros((info.m, info.n))
                e[row] = c[col]
                out.append(e)
    return np.array(out)


def lmi_block(form: QuadraticForm, kc: np.ndarray) -> np.ndarray:
    """[[Q + S KC + (S KC)^T, (KC)^T R], [R KC, -R]] for a concrete KC.

    For singular R the factored form with F^T F = R and corner -I is used;
    for R = 0 only the upper-left block remains.
    """
    t = form.s @ kc
    top = form.q + t + t.T
    left, corner = _schur_parts(form.r)
    if left is None:
        return linalg.symmetrize(top)
    lower = left @ kc
    return linalg.symmetrize(np.block([[top, lower.T], [lower, -corner]]))


def build_lmi(forms: Sequence[QuadraticForm], info: InformationStructure) -> sdp.SdpProblem:
    """One LMI block per form, affine in the gain-basis coefficients of K."""
    for j, f in enumerate(forms):
        if f.n != info.n or f.m != info.m:
            raise ValueError(f"form {j} has dimensions {(f.n, f.m)}, expected {(info.n, info.m)}")
    basis = _basis_kc(info)
    nv = basis.shape[0]
    blocks = [sdp.affine_block(lambda z, f=f: lmi_block(f, np.tensordot(z, basis, axes=1)), nv) for f in forms]
    names = []
    for i, (mi, pi) in enumerate(zip(info.decision_dims, info.measurement_dims)):
        names += [f"K{i + 1}[{r},{s}]" for r in range(mi) for s in range(pi)]
    return sdp.SdpProblem(np.zeros(nv), tuple(blocks), tuple(names))


def lmi_feasibility(forms: Sequence[QuadraticForm], info: InformationStructure,
                    settings: sdp.SdpSettings | None = None) -> FeasibilityResult:
    """Max-margin K for the joint LMIs; feasible iff the margin is > -1e-8.

    Each form is divided by its spectral norm first, so the margin is
    relative and the returned gain does not change when a form is scaled.
    """
    forms = [f.scaled(1.0 / (np.linalg.norm(f.matrix(), 2) or 1.0)) for f in forms]
    problem = build_lmi(forms, info)
    res = sdp.feasibility(problem, settings or _SETTINGS, threshold=FEASIBLE_THRESHOLD)
    gain = DecisionGain.from_coefficients(res.z, info)
    eigs = [float(np.linalg.eigvalsh(v)[-1]) for v in problem.evaluate(res.z)]
    return FeasibilityResult(res.feasible, gain, res.margin, int(np.argmax(eigs)), eigs)


def solve_constrained_minimax(forms: Sequence[QuadraticForm], info: InformationStructure):
    """Joint feasibility of worst-case constraints with their bounds folded into Q.

    Returns (feasible, gain); the full FeasibilityResult is available via
    ``lmi_feasibility`` when the margin or offending block is needed.
    """
    res = lmi_feasibility(forms, info)
    return res.feasible, res.gain


def fold_bound(form: QuadraticForm, bound: float) -> QuadraticForm:
    """[x; u]^T M [x; u] <= bound |x|^2 as a form that must stay <= 0."""
    return form.shifted(bound)


def norm_constraint_form(info: InformationStructure, player: int, gamma: float) -> QuadraticForm:
    """|u_i|^2 <= gamma |x|^2 for player i (0-based), folded."""
    if gamma < 0:
        raise ValueError("induced-norm bound must be nonnegative")
    r = np.zeros((info.m, info.m))
    sl = info.decision_slices()[player]
    r[sl, sl] = np.eye(sl.stop - sl.start)
    return QuadraticForm(-gamma * np.eye(info.n), np.zeros((info.n, info.m)), r)


def shared_power_form(info: InformationStructure, c: float) -> QuadraticForm:
    """sum_i |u_i|^2 <= c |x|^2, folded."""
    if c < 0:
        raise ValueError("power budget must be nonnegative")
    return QuadraticForm(-c * np.eye(info.n), np.zeros((info.n, info.m)), np.eye(info.m))


def minimax_value(objective: QuadraticForm, info: InformationStructure, tol: float = 1e-6,
                  constraints: Sequence[QuadraticForm] = ()) -> MinimaxSolution:
    """Bisection on gamma for feasibility of the LMIs with Q_0 -> Q_0 - gamma I.

    ``constraints`` are folded forms that must hold alongside the objective.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if np.linalg.eigvalsh(objective.r)[0] <= 0:
        raise ValueError("objective r is not positive definite")
    constraints = list(constraints)
    trace = []

    def feasible(gamma):
        res = lmi_feasibility([objective.shifted(gamma)] + constraints, info)
        trace.append((float(gamma), bool(res.feasible)))
        return res.feasible

    # the bracket scales with the form, so scaling the objective (and tol)
    # scales every probe and leaves the returned gain unchanged
    spread = float(np.linalg.norm(objective.q, 2))
    pad = float(np.linalg.norm(objective.matrix(), 2)) or 1.0
    lo, hi = -spread, spread + pad
    for _ in range(6):
        if feasible(hi):
            break
        hi = hi + 10.0 * (abs(hi) + pad)
    else:
        if not feasible(hi):
            raise BracketError(f"LMIs infeasible even at gamma = {hi:g}; the constraints may be infeasible")
    for _ in range(6):
        if not feasible(lo):
            break
        lo = lo - 10.0 * (abs(lo) + pad)
    else:
        if feasible(lo):
            raise BracketError(f"LMIs feasible even at gamma = {lo:g}; the value is unbounded below")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    value = 0.5 * (lo + hi)
    final = lmi_feasibility([objective.shifted(value + tol)] + constraints, info)
    trace.append((value + tol, bool(final.feasible)))
    return MinimaxSolution(value, final.gain, final.margin, trace, tol)


def solve_problem(problem: TeamProblem, tol: float = 1e-6) -> MinimaxSolution:
    """minimax_value for a validated minimax-mode TeamProblem."""
    check(problem)
    if problem.mode != MINIMAX:
        raise ProblemError(["worst-case solver needs minimax mode"])
    folded = [fold_bound(f, g) for f, g in problem.constraints]
    return minimax_value(problem.objective, problem.info, tol, folded)


def worst_case_ratio(form: QuadraticForm, gain: DecisionGain, info: InformationStructure) -> float:
    """sup_x [x; KCx]^T M [x; KCx] / |x|^2 = lambda_max([I; KC]^T M [I; KC])."""
    kc = gain.assemble(info) @ info.stacked_c()
    return linalg.lambda_max(form.congruence(kc))


def full_information_value(objective: QuadraticForm) -> float:
    """lambda_max(Q - S R^-1 S^T): the value when one player sees all of x."""
    schur = objective.q - objective.s @ linalg.solve_spd(objective.r, objective.s.T)
    return linalg.lambda_max(schur)


def stochastic_equivalence_check(m) -> tuple[float, float]:
    """(max tr(M X) over PSD X with tr X = 1 solved as an SDP, lambda_max(M)).

    X is parametrized as I/n + sum_k z_k G_k with G_k spanning the
    trace-free symmetric matrices, so z = 0 is strictly feasible.
    """
    m = linalg.symmetrize(m)
    n = m.shape[0]
    gens = _trace_free_basis(n)
    x0 = np.eye(n) / n
    nv = len(gens)
    cost = np.array([-np.sum(m * g) for g in gens])
    block = np.stack([-x0] + [-g for g in gens])
    sol = sdp.solve(sdp.SdpProblem(cost, (block,)), _SETTINGS)
    x = x0 + (np.tensordot(sol.z, np.array(gens), axes=1) if nv else 0.0)
    return float(np.sum(m * x)), linalg.lambda_max(m)


def _trace_free_basis(n: int) -> list:
    gens = []
    for i in range(n):
        for j in range(i + 1, n):
            g = np.zeros((n, n))
            g[i, j] = g[j, i] = 1.0 / math.sqrt(2.0)
            gens.append(g)
    for i in range(n - 1):
        g = np.zeros((n, n))
        g[i, i] = 1.0
        g[n - 1, n - 1] = -1.0
        gens.append(g)
    return gens


def maxmin_value(form: QuadraticForm, info: InformationStructure) -> float:
    """sup over trace-1 PSD X of inf over structured K of tr([I;KC]^T M [I;KC] X).

    For fixed X the inner problem is a quadratic in the gain coefficients
    z: tr(Q X) + 2 h(X)^T z + z^T G(X) z with h, G linear in X, whose
    infimum is captured by [[tr(QX) - t, h^T], [h, G]] >= 0.
    """
    n = form.n
    basis = _basis_kc(info)
    gens = _trace_free_basis(n)
    x0 = np.eye(n) / n
    nx = len(gens)
    nv = nx + 1  # X coordinates, then t

    def xmat(z):
        return x0 + (np.tensordot(z[:nx], np.array(gens), axes=1) if nx else 0.0)

    def schur(z):
        x = xmat(z)
        h = np.array([np.trace(form.s @ b @ x) for b in basis])
        g = np.array([[np.trace(bi.T @ form.r @ bj @ x) for bj in basis] for bi in basis])
        top = np.trace(form.q @ x) - z[nx]
        return -np.block([[np.array([[top]]), h[None, :]], [h[:, None], g]])

    cost = np.zeros(nv)
    cost[nx] = -1.0
    blocks = (sdp.affine_block(lambda z: -xmat(z), nv), sdp.affine_block(schur, nv))
    sol = sdp.solve(sdp.SdpProblem(cost, blocks), _SETTINGS)
    return float(sol.z[nx])
