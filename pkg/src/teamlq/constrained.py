"""Gaussian team problems with quadratic expectation constraints.

For linear decisions u = K C x with x ~ N(0, X^2) every constraint
E[(x, u)^T M_j (x, u)] <= g_j equals tr X [I; KC]^T M_j [I; KC] X <= g_j.
Introducing P_j that dominates the inner matrix and taking a Schur
complement in R_j turns the problem into an SDP in (g_0, P_j, K).
Measurement noise is absorbed by augmenting the state with v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg, radner, sdp
from .core import GAUSSIAN, DecisionGain, ProblemError, QuadraticForm, TeamProblem, augment, check

INFEASIBLE = sdp.INFEASIBLE


@dataclass(frozen=True)
class _FormPlan:
    """How constraint j enters the SDP."""

    index: int
    kind: str                      # "schur", "affine" or "constant"
    left: np.ndarray | None = None   # R_j, or a factor F with F^T F = R_j
    corner: np.ndarray | None = None  # R_j, or I
    factored: bool = False


@dataclass(frozen=True)
class SdpLayout:
    """Variable and block bookkeeping for the assembled SDP."""

    problem: sdp.SdpProblem
    x_sqrt: np.ndarray
    info: object
    forms: list
    p_offsets: dict
    k_offset: int
    trace_blocks: dict
    lmi_blocks: dict
    constant_forms: dict
    factored: tuple


@dataclass
class ConstrainedSolution:
    gain: DecisionGain
    objective_value: float
    constraint_values: list
    multipliers: list
    slack_matrices: list
    status: str
    sdp_solution: sdp.SdpSolution | None = field(default=None, repr=False)
    metadata: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == sdp.OPTIMAL


def _plan(form: QuadraticForm, j: int) -> _FormPlan:
    r = form.r
    lam = np.linalg.eigvalsh(r)
    norm = max(float(np.max(np.abs(lam))), 0.0)
    if norm > 0 and lam[0] > linalg.PSD_TOL * norm:
        return _FormPlan(j, "schur", r, r)
    factor = linalg.psd_factor(r) if norm > 0 else np.zeros((0, r.shape[0]))
    if factor.shape[0] > 0:
        return _FormPlan(j, "schur", factor, np.eye(factor.shape[0]), factored=True)
    if np.any(form.s != 0):
        return _FormPlan(j, "affine")
    return _FormPlan(j, "constant")


def build_sdp(problem: TeamProblem) -> SdpLayout:
    """Assemble the SDP: minimize g_0 over (g_0, P_j, K).

    Per form j, with A = X [I; KC]^T-style products written out,

        [[P_j - X Q_j X - X S_j K C X - X C^T K^T S_j^T X,  X C^T K^T R_j],
         [R_j K C X,                                        R_j        ]]  >= 0

    and tr P_j <= g_j.  A singular R_j is replaced by a full-row-rank factor
    F (F^T F = R_j) with identity corner, which is the same constraint.
    """
    check(problem)
    if problem.mode != GAUSSIAN:
        raise ProblemError(["constrained Gaussian solver needs gaussian mode"])
    aug = augment(problem)
    x = linalg.psd_sqrt(aug.cov)
    n = x.shape[0]
    c = aug.info.stacked_c()
    basis = _gain_basis_products(aug.info, c, x)
    plans = [_plan(f, j) for j, f in enumerate(aug.forms)]
    plans[0] = plans[0] if plans[0].kind == "schur" else _FormPlan(0, "affine")
    bounds = [None] + problem.bounds
    ntri = n * (n + 1) // 2

    names = ["gamma0"]
    p_offsets = {}
    for plan in plans:
        if plan.kind == "constant":
            continue
        p_offsets[plan.index] = len(names)
        names += [f"P{plan.index}[{a},{b}]" for a, b in zip(*np.triu_indices(n))]
    k_offset = len(names)
    for i, (mi, pi) in enumerate(zip(aug.info.decision_dims, aug.info.measurement_dims)):
        names += [f"K{i + 1}[{r},{s}]" for r in range(mi) for s in range(pi)]
    nv = len(names)

    def kcx(z):
        return np.tensordot(z[k_offset:], basis, axes=1)

    blocks, trace_blocks, lmi_blocks, constant_forms = [], {}, {}, {}
    for plan in plans:
        form = aug.forms[plan.index]
        if plan.kind == "constant":
            constant_forms[plan.index] = float(np.trace(x @ form.q @ x))
            continue
        off = p_offsets[plan.index]
        xqx = x @ form.q @ x

        def lmi(z, form=form, plan=plan, off=off, xqx=xqx):
            p = linalg.smat(z[off:off + ntri])
            kx = kcx(z)
            t = x @ form.s @ kx
            top = p - xqx - t - t.T
            if plan.kind == "affine":
                return -top
            lower = plan.left @ kx
            return -np.block([[top, lower.T], [lower, plan.corner]])

        def trace_row(z, plan=plan, off=off):
            p = linalg.smat(z[off:off + ntri])
            bound = z[0] if plan.index == 0 else bounds[plan.index]
            return np.array([[np.trace(p) - bound]])

        lmi_blocks[plan.index] = len(blocks)
        blocks.append(sdp.affine_block(lmi, nv))
        trace_blocks[plan.index] = len(blocks)
        blocks.append(sdp.affine_block(trace_row, nv))

    cost = np.zeros(nv)
    cost[0] = 1.0
    problem_sdp = sdp.SdpProblem(cost, tuple(blocks), tuple(names))
    factored = tuple(p.index for p in plans if p.factored)
    return SdpLayout(problem_sdp, x, aug.info, aug.forms, p_offsets, k_offset, trace_blocks, lmi_blocks,
                     constant_forms, factored)


def _gain_basis_products(info, c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """E_k C X for every gain basis matrix E_k (stacked)."""
    out = []
    for rs, cs in zip(info.decision_slices(), info.measurement_slices()):
        for row in range(rs.start, rs.stop):
            for col in range(cs.start, cs.stop):
                e = np.zeros((info.m, x.shape[0]))
                e[row] = c[col] @ x
                out.append(e)
    return np.array(out) if out else np.zeros((0, info.m, x.shape[0]))


def constraint_value(problem: TeamProblem, gain: DecisionGain, j: int) -> float:
    """tr X [I; KC]^T M_j [I; KC] X on the (noise-augmented) state; j = 0 is the objective."""
    aug = augment(problem)
    x = linalg.psd_sqrt(aug.cov)
    kc = gain.assemble(aug.info) @ aug.info.stacked_c()
    return float(np.trace(x @ aug.forms[j].congruence(kc) @ x))


def solve_constrained(problem: TeamProblem, settings: sdp.SdpSettings | None = None) -> ConstrainedSolution:
    """Optimal linear team decision under expectation constraints.

    Every form (and its bound) is divided by its spectral norm before the
    SDP is built.  The feasible set is unchanged, the SDP is better
    conditioned, and scaling any form leaves the returned gain unchanged.
    """
    check(problem)
    scales = [float(np.linalg.norm(f.matrix(), 2)) or 1.0 for f in problem.forms]
    normalized = problem.replace(
        objective=problem.objective.scaled(1.0 / scales[0]),
        constraints=tuple((f.scaled(1.0 / sj), g / sj) for (f, g), sj in zip(problem.constraints, scales[1:])))
    layout = build_sdp(normalized)
    settings = settings or sdp.SdpSettings(gap_tol=1e-10)
    info = problem.info
    meta = {"factored_forms": list(layout.factored), "constant_forms": dict(layout.constant_forms),
            "form_scales": scales}

    for j, value in layout.constant_forms.items():
        if value > normalized.bounds[j - 1]:
            zero = DecisionGain(tuple(np.zeros((mi, pi)) for mi, pi in zip(info.decision_dims, info.measurement_dims)))
            return ConstrainedSolution(zero, math.nan, [], [], [], INFEASIBLE, None, meta)

    sol = sdp.solve(layout.problem, settings)
    n = layout.x_sqrt.shape[0]
    ntri = n * (n + 1) // 2
    gain = DecisionGain.from_coefficients(sol.z[layout.k_offset:], info)
    values = [constraint_value(problem, gain, j) for j in range(1, len(problem.constraints) + 1)]
    multipliers = []
    for j in range(1, len(problem.constraints) + 1):
        if j in layout.trace_blocks:
            # multiplier of the normalized constraint, converted back to original units
            multipliers.append(float(sol.duals[layout.trace_blocks[j]][0, 0]) * scales[0] / scales[j])
        else:
            multipliers.append(0.0)
    slacks = [scales[j] * linalg.smat(sol.z[off:off + ntri]) for j, off in sorted(layout.p_offsets.items())]
    meta["sdp_iterations"] = sol.iterations
    meta["sdp_residuals"] = list(sol.residuals)
    return ConstrainedSolution(gain, scales[0] * float(sol.z[0]), values, multipliers, slacks, sol.status, sol,
                               meta)


def lagrangian_gradient(problem: TeamProblem, gain: DecisionGain, multipliers) -> DecisionGain:
    """Block gradient of objective + sum_j lambda_j * constraint_j at K."""
    grads = [radner.cost_gradient(problem, gain, problem.objective)]
    weights = [1.0]
    for (form, _), lam in zip(problem.constraints, multipliers):
        grads.append(radner.cost_gradient(problem, gain, form))
        weights.append(lam)
    blocks = [sum(w * g.blocks[i] for w, g in zip(weights, grads)) for i in range(len(gain.blocks))]
    return DecisionGain(tuple(blocks))


@dataclass(frozen=True)
class DualGapReport:
    lagrangian: float
    objective: float
    slack_terms: tuple
    complementary_slackness: float
    stationarity: float


def dual_gap_report(problem: TeamProblem, solution: ConstrainedSolution, multipliers=None) -> DualGapReport:
    """Evaluate L(K, lambda) = f_0(K) + sum_j lambda_j (f_j(K) - g_j) at the solution."""
    lam = list(solution.multipliers if multipliers is None else multipliers)
    objective = radner.expected_cost(problem, solution.gain)
    terms = tuple(l * (radner.expected_cost(problem, solution.gain, f) - g)
                  for l, (f, g) in zip(lam, problem.constraints))
    grad = lagrangian_gradient(problem, solution.gain, lam)
    stationarity = max((float(np.max(np.abs(b))) for b in grad.blocks if b.size), default=0.0)
    return DualGapReport(objective + sum(terms), objective, terms,
                         max((abs(t) for t in terms), default=0.0), stationarity)
