"""Small dense semidefinite programs in LMI form.

    minimize    c^T z
    subject to  F_0^(b) + sum_k z_k F_k^(b)  <=  0      for every block b

The dual multiplies each block by a PSD matrix X_b:

    maximize    sum_b tr(F_0^(b) X_b)
    subject to  sum_b tr(F_k^(b) X_b) = -c_k,   X_b >= 0

Both are solved together by an infeasible-start primal-dual path-following
method with Nesterov-Todd scaling and a Mehrotra-type centering rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"

FEAS_TOL = 1e-9


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@dataclass(frozen=True)
class SdpProblem:
    cost: np.ndarray
    lmi_blocks: tuple
    var_names: tuple = ()

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=float).ravel()
        blocks = []
        for i, b in enumerate(self.lmi_blocks):
            b = np.asarray(b, dtype=float)
            if b.ndim != 3 or b.shape[1] != b.shape[2]:
                raise ValueError(f"block {i} must be a stack of square matrices, got shape {b.shape}")
            if b.shape[0] != cost.size + 1:
                raise ValueError(f"block {i} holds {b.shape[0]} matrices, expected {cost.size + 1}")
            blocks.append(_sym(b))
        if not blocks:
            raise ValueError("an SDP needs at least one LMI block")
        names = tuple(self.var_names) or tuple(f"z{k}" for k in range(cost.size))
        if len(names) != cost.size:
            raise ValueError(f"{len(names)} variable names for {cost.size} variables")
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "lmi_blocks", tuple(blocks))
        object.__setattr__(self, "var_names", names)

    @property
    def num_vars(self) -> int:
        return self.cost.size

    @property
    def block_dims(self) -> list:
        return [b.shape[1] for b in self.lmi_blocks]

    def evaluate(self, z) -> list:
        """The block values F_0 + sum_k z_k F_k."""
        z = np.asarray(z, dtype=float)
        return [b[0] + np.tensordot(z, b[1:], axes=1) for b in self.lmi_blocks]

    def index(self, name: str) -> int:
        return self.var_names.index(name)


def affine_block(fn: Callable[[np.ndarray], np.ndarray], num_vars: int) -> np.ndarray:
    """Stack (F_0, F_1, ...) for a matrix-valued affine function of z.

    ``fn`` must be affine; the coefficients are read off as
    F_0 = fn(0), F_k = fn(e_k) - fn(0).
    """
    zero = np.zeros(num_vars)
    f0 = np.asarray(fn(zero), dtype=float)
    mats = [f0]
    for k in range(num_vars):
        e = zero.copy()
        e[k] = 1.0
        mats.append(np.asarray(fn(e), dtype=float) - f0)
    return np.stack(mats)


@dataclass(frozen=True)
class SdpSettings:
    max_iter: int = 200
    gap_tol: float = 1e-8
    step_fraction: float = 0.98
    feas_tol: float = FEAS_TOL
    divergence: float = 1e6
    ray_tol: float = 1e-7
    classify: bool = True


@dataclass(frozen=True)
class Iterate:
    iteration: int
    primal_objective: float
    dual_objective: float
    complementarity: float
    primal_infeasibility: float
    dual_infeasibility: float
    step_primal: float
    step_dual: float

    @property
    def gap(self) -> float:
        return self.primal_objective - self.dual_objective


@dataclass
class SdpSolution:
    z: np.ndarray
    duals: list
    primal_objective: float
    dual_objective: float
    status: str
    iterations: int
    residuals: tuple
    history: list = field(default_factory=list, repr=False)
    regularization: float = 0.0

    @property
    def duality_gap(self) -> float:
        return self.primal_objective - self.dual_objective

    def exposed_iterates(self, tol: float = FEAS_TOL) -> list:
        """Iterates that are primal and dual feasible to ``tol`` (relative).

        Only these carry a meaningful duality bound; earlier iterates of the
        infeasible-start method have not yet reached either feasible set.
        """
        return [it for it in self.history
                if it.primal_infeasibility <= tol and it.dual_infeasibility <= tol]

    def value(self, problem: SdpProblem, name: str) -> float:
        return float(self.z[problem.index(name)])


def _max_step(x_chol: np.ndarray, dx: np.ndarray) -> float:
    """Largest a with X + a dX >= 0, given the Cholesky factor of X."""
    li = np.linalg.solve(x_chol, np.eye(x_chol.shape[0]))
    t = _sym(li @ dx @ li.T)
    if not np.all(np.isfinite(t)):
        return 0.0
    lam = np.linalg.eigvalsh(t)[0]
    return math.inf if lam >= 0 else -1.0 / lam


@dataclass(frozen=True)
class _Scaling:
    """Nesterov-Todd scaling W = G G^T with G^-1 X G^-T = G^T S G = diag(d)."""

    w: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    d: np.ndarray

    def centering_rhs(self, target: float, dx=None, ds=None) -> np.ndarray:
        """R_c with dX + W dS W = R_c for the symmetrized centering condition.

        Without (dx, ds) this is target * S^-1 - X; with them the
        second-order term of the affine step is subtracted as well.
        """
        d = self.d
        r = np.diag(target - d * d)
        if dx is not None:
            a = self.g_inv @ dx @ self.g_inv.T
            b = self.g.T @ ds @ self.g
            r = r - 0.5 * (a @ b + b @ a)
        h = 2.0 * r / (d[:, None] + d[None, :])
        return _sym(self.g @ h @ self.g.T)


def _nt_scaling(x_chol: np.ndarray, s: np.ndarray) -> _Scaling:
    t = _sym(x_chol.T @ s @ x_chol)
    lam, u = np.linalg.eigh(t)
    lam = np.maximum(lam, 1e-300)
    q = lam ** -0.25
    g = (x_chol @ u) * q
    g_inv = (u.T / q[:, None]) @ np.linalg.solve(x_chol, np.eye(x_chol.shape[0]))
    return _Scaling(_sym(g @ g.T), g, g_inv, np.sqrt(lam))


def _chol(a: np.ndarray) -> np.ndarray | None:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None


def _solve_schur(m: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray | None, float]:
    """Solve M dy = rhs, adding diagonal regularization 1e-12 .. 1e-6 if needed."""
    if m.size == 0:
        return np.zeros(0), 0.0
    scale = max(float(np.max(np.abs(np.diag(m)))), 1e-300)
    reg = 0.0
    while True:
        lower = _chol(m + reg * scale * np.eye(m.shape[0]))
        if lower is not None:
            dy = np.linalg.solve(lower.T, np.linalg.solve(lower, rhs))
            for _ in range(2):  # iterative refinement against the unregularized matrix
                dy = dy + np.linalg.solve(lower.T, np.linalg.solve(lower, rhs - m @ dy))
            return dy, reg
        reg = 1e-12 if reg == 0.0 else 2.0 * reg
        if reg > 1e-6:
            return None, reg


class _Ops:
    """Per-block adjoint maps for the variables actually present in the LMIs."""

    def __init__(self, problem: SdpProblem, active: np.ndarray):
        self.f0 = [b[0] for b in problem.lmi_blocks]
        self.fk = [b[1:][active] for b in problem.lmi_blocks]
        self.cost = problem.cost[active]
        self.dims = problem.block_dims
        self.nu = int(sum(self.dims))

    def lin(self, z):
        return [np.tensordot(z, fk, axes=1) if fk.shape[0] else np.zeros_like(f0)
                for fk, f0 in zip(self.fk, self.f0)]

    def adj(self, xs):
        out = np.zeros(self.cost.size)
        for fk, x in zip(self.fk, xs):
            out += np.einsum("kab,ab->k", fk, x)
        return out

    def schur(self, gs):
        """M_ij = sum over blocks of tr(F_i W F_j W), formed as a Gram matrix of G^T F_k G."""
        m = np.zeros((self.cost.size, self.cost.size))
        for fk, g in zip(self.fk, gs):
            t = (g.T @ fk @ g).reshape(fk.shape[0], g.shape[1] * g.shape[1])
            m += t @ t.T
        return _sym(m)


def solve(problem: SdpProblem, settings: SdpSettings | None = None) -> SdpSolution:
    """Solve an SDP in LMI form; deterministic for identical inputs."""
    # overflow near a stalled or diverging iterate is caught by explicit finiteness checks
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _solve(problem, settings or SdpSettings())


def _solve(problem: SdpProblem, st: SdpSettings) -> SdpSolution:
    nv = problem.num_vars
    active = np.array([any(np.any(b[k + 1] != 0) for b in problem.lmi_blocks) for k in range(nv)], dtype=bool)
    if np.any(problem.cost[~active] != 0):
        # a variable that only appears in the cost can be driven to -infinity,
        # provided the LMIs admit any point at all
        rest = SdpProblem(np.where(active, problem.cost, 0.0), problem.lmi_blocks, problem.var_names)
        sol = _solve(rest, st)
        if sol.status in (OPTIMAL, UNBOUNDED):
            sol.status = UNBOUNDED
            sol.primal_objective = sol.dual_objective = -math.inf
        return sol
    ops = _Ops(problem, active)
    # work with a unit-norm cost so that c and alpha * c follow the same path;
    # duals and objectives are scaled back on output
    cscale = float(np.linalg.norm(ops.cost)) or 1.0
    c = ops.cost / cscale
    b = -c
    cneg = [-f for f in ops.f0]
    norm_c = math.sqrt(sum(np.sum(f * f) for f in ops.f0))
    norm_b = float(np.linalg.norm(b))

    # cold start: z = 0, X and S multiples of the identity sized to the data
    fk_norms = [math.sqrt(sum(np.sum(fk[k] ** 2) for fk in ops.fk)) for k in range(c.size)]
    xi = max(10.0, max((math.sqrt(d) for d in ops.dims), default=1.0),
             max((max(ops.dims) * (1 + abs(b[k])) / (1 + fk_norms[k]) for k in range(c.size)), default=1.0))
    eta = max(10.0, max((math.sqrt(d) for d in ops.dims), default=1.0), norm_c, max(fk_norms, default=0.0))
    xs = [xi * np.eye(d) for d in ops.dims]
    ss = [eta * np.eye(d) for d in ops.dims]
    y = np.zeros(c.size)

    history = []
    status = MAX_ITER
    best = (math.inf, None)
    reg_used = 0.0
    it = 0
    for it in range(st.max_iter + 1):
        fy = ops.lin(y)
        rd = [cn - s - f for cn, s, f in zip(cneg, ss, fy)]
        rp = b - ops.adj(xs)
        pobj = float(c @ y)
        dobj = float(sum(np.sum(f * x) for f, x in zip(ops.f0, xs)))
        comp = float(sum(np.sum(x * s) for x, s in zip(xs, ss)))
        pinf = math.sqrt(sum(np.sum(r * r) for r in rd)) / (1.0 + norm_c)
        dinf = float(np.linalg.norm(rp)) / (1.0 + norm_b)
        history.append(Iterate(it, cscale * pobj, cscale * dobj, cscale * comp, pinf, dinf, 0.0, 0.0))
        scale = 1.0 + abs(pobj)
        merit = max(pinf, dinf, abs(pobj - dobj) / scale, comp / scale)
        if merit < best[0]:
            best = (merit, (y, xs, len(history) - 1))
        if (pinf <= st.feas_tol and dinf <= st.feas_tol
                and abs(pobj - dobj) <= st.gap_tol * scale and comp <= st.gap_tol * scale):
            status = OPTIMAL
            break
        # infeasibility certificates: a dual ray X with A(X) ~ 0, tr(F_0 X) > 0
        # proves the LMIs infeasible; a primal ray with c^T dz < 0 proves unboundedness
        if dobj > st.divergence * (1.0 + norm_b) and np.linalg.norm(b - rp) / dobj < st.ray_tol:
            status = INFEASIBLE
            break
        if -pobj > st.divergence * (1.0 + norm_c) and pinf * (1.0 + norm_c) / -pobj < st.ray_tol:
            status = UNBOUNDED
            break
        if it == st.max_iter:
            break

        x_chols = [_chol(x) for x in xs]
        s_chols = [_chol(s) for s in ss]
        if any(l is None for l in x_chols + s_chols):
            break
        scalings = [_nt_scaling(lx, s) for lx, s in zip(x_chols, ss)]
        ws = [sc.w for sc in scalings]
        m = ops.schur([sc.g for sc in scalings])
        mu = comp / ops.nu

        def direction(rcs):
            rhs = rp - ops.adj([rc - w @ r @ w for rc, w, r in zip(rcs, ws, rd)])
            dy, reg = _solve_schur(m, rhs)
            if dy is None:
                return None
            fdy = ops.lin(dy)
            dss = [r - f for r, f in zip(rd, fdy)]
            dxs = [_sym(rc - w @ ds @ w) for rc, w, ds in zip(rcs, ws, dss)]
            return dy, dxs, dss, reg

        pred = direction([sc.centering_rhs(0.0) for sc in scalings])
        if pred is None:
            break
        _, dxs_aff, dss_aff, _ = pred
        if not all(np.all(np.isfinite(d)) for d in dxs_aff + dss_aff):
            break
        dxs, dss = dxs_aff, dss_aff
        ap = min([1.0] + [_max_step(lx, dx) for lx, dx in zip(x_chols, dxs)])
        ad = min([1.0] + [_max_step(ls, ds) for ls, ds in zip(s_chols, dss)])
        mu_aff = sum(np.sum((x + ap * dx) * (s + ad * ds)) for x, dx, s, ds in zip(xs, dxs, ss, dss)) / ops.nu
        sigma = min(1.0, max(0.0, mu_aff / mu) ** 3) if mu > 0 else 0.0

        corr = direction([sc.centering_rhs(sigma * mu, dx, ds)
                          for sc, dx, ds in zip(scalings, dxs_aff, dss_aff)])
        if corr is None:
            break
        dy, dxs, dss, reg = corr
        if not (np.all(np.isfinite(dy)) and all(np.all(np.isfinite(d)) for d in dxs + dss)):
            break
        reg_used = max(reg_used, reg)
        ap = min(1.0, st.step_fraction * min([math.inf] + [_max_step(lx, dx) for lx, dx in zip(x_chols, dxs)]))
        ad = min(1.0, st.step_fraction * min([math.inf] + [_max_step(ls, ds) for ls, ds in zip(s_chols, dss)]))
        history[-1] = Iterate(it, cscale * pobj, cscale * dobj, cscale * comp, pinf, dinf, ap, ad)
        if max(ap, ad) < 1e-12:
            break
        xs = [_sym(x + ap * dx) for x, dx in zip(xs, dxs)]
        ss = [_sym(s + ad * ds) for s, ds in zip(ss, dss)]
        y = y + ad * dy

    if status == MAX_ITER and best[1] is not None:
        # report the best iterate seen rather than wherever the method stalled
        y, xs, k = best[1]
        last = history[k]
    else:
        last = history[-1]
    z = np.zeros(nv)
    z[active] = y
    if status == MAX_ITER and st.classify:
        # no convergence: let the big-M phase decide whether the LMIs are infeasible
        phase1 = feasibility(problem, replace(st, classify=False))
        if phase1.solution.status == OPTIMAL and not phase1.feasible:
            status = INFEASIBLE
    return SdpSolution(
        z=z,
        duals=[cscale * x for x in xs],
        primal_objective=float(problem.cost @ z),
        dual_objective=last.dual_objective,
        status=status,
        iterations=it,
        residuals=(last.primal_infeasibility, last.dual_infeasibility, last.gap),
        history=history,
        regularization=reg_used,
    )


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    z: np.ndarray
    margin: float
    solution: SdpSolution


def feasibility(problem: SdpProblem, settings: SdpSettings | None = None, threshold: float = 1e-8) -> Feasibility:
    """Maximize the margin t' = -t with F(z) <= t I on every block.

    The LMIs are declared feasible iff the optimal t is below ``threshold``.
    The returned z is the solver's max-margin point, which makes it a
    deterministic representative of the feasible set.
    """
    nv = problem.num_vars
    blocks = []
    for b in problem.lmi_blocks:
        d = b.shape[1]
        shift = np.zeros((nv + 2, d, d))
        shift[: nv + 1] = b
        shift[nv + 1] = -np.eye(d)
        blocks.append(shift)
    cost = np.zeros(nv + 1)
    cost[nv] = 1.0
    aux = SdpProblem(cost, tuple(blocks), tuple(problem.var_names) + ("__t",))
    sol = solve(aux, settings)
    if sol.status == UNBOUNDED:
        return Feasibility(True, sol.z[:nv], math.inf, sol)
    t = float(sol.z[nv])
    return Feasibility(t < threshold, sol.z[:nv], -t, sol)


@dataclass(frozen=True)
class Report:
    primal_violation: float
    dual_psd_violation: float
    dual_equality_residual: float
    gap: float
    complementary_slackness: tuple

    def passed(self, tol: float = 1e-7, scale: float = 1.0) -> bool:
        return (self.primal_violation <= tol
                and self.dual_psd_violation <= 1e-9 * scale
                and self.dual_equality_residual <= tol * scale
                and abs(self.gap) <= tol * scale
                and all(abs(c) <= tol * scale for c in self.complementary_slackness))


def verify(problem: SdpProblem, solution: SdpSolution) -> Report:
    """Recompute feasibility, gap and complementarity from (z, X) alone."""
    z = np.asarray(solution.z, dtype=float)
    if z.size != problem.num_vars or len(solution.duals) != len(problem.lmi_blocks):
        raise ValueError("solution does not match problem shape")
    values = problem.evaluate(z)
    pviol = max(max(0.0, float(np.linalg.eigvalsh(v)[-1])) for v in values)
    dviol = max(max(0.0, -float(np.linalg.eigvalsh(_sym(np.asarray(x)))[0])) for x in solution.duals)
    eq = problem.cost.copy()
    for b, x in zip(problem.lmi_blocks, solution.duals):
        eq += np.einsum("kab,ab->k", b[1:], x)
    dobj = sum(float(np.sum(b[0] * x)) for b, x in zip(problem.lmi_blocks, solution.duals))
    gap = float(problem.cost @ z) - dobj
    cs = tuple(float(np.sum(v * x)) for v, x in zip(values, solution.duals))
    return Report(pviol, dviol, float(np.linalg.norm(eq)), gap, cs)


def dump(problem: SdpProblem) -> str:
    """Plain-text rendering, one labeled matrix per section."""
    lines = [f"# sdp num_vars={problem.num_vars} blocks={len(problem.lmi_blocks)}", "[cost]"]
    lines += [f"{name} {value:.17g}" for name, value in zip(problem.var_names, problem.cost)]
    for bi, b in enumerate(problem.lmi_blocks):
        labels = ["F0"] + [f"F[{name}]" for name in problem.var_names]
        for label, mat in zip(labels, b):
            lines.append(f"[block {bi} {label} {mat.shape[0]}x{mat.shape[1]}]")
            lines += [" ".join(f"{v:.17g}" for v in row) for row in mat]
    return "\n".join(lines) + "\n"
