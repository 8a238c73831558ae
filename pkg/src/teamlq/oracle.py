"""Independent checks for the solvers.

Nothing here calls the solver code paths it is meant to check: Monte Carlo
replaces closed-form expectations, an explicitly assembled Gram matrix
replaces the Kronecker-lifted team system, and grid search replaces the
closed-form nonlinear policy.

Random streams: sample block b of a run with seed s draws from
PCG64(SeedSequence(s, spawn_key=(b,))).  Blocks have a fixed size, so a
parallel run over blocks reproduces the serial result exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import linalg
from .core import GAUSSIAN, DecisionGain, InformationStructure, QuadraticForm, TeamProblem

BLOCK_SIZE = 1 << 16

Policy = Sequence[Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    samples: int
    seed: int

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.std_error


def linear_policy(gain: DecisionGain) -> list:
    """Per-player callables y_i -> K_i y_i acting on sample rows."""
    return [lambda y, k=k: y @ k.T for k in gain.blocks]


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _block_stats(problem: TeamProblem, policies: Sequence[Policy], forms: Sequence[QuadraticForm],
                 weights: Sequence[float], count: int, seed: int, block: int):
    info = problem.info
    rng = _block_rng(seed, block)
    x = rng.standard_normal((count, info.n)) @ _sqrt(problem.stats.state_cov)
    y = x @ info.stacked_c().T
    if problem.stats.noise_cov is not None:
        y = y + rng.standard_normal((count, info.p)) @ _sqrt(problem.stats.noise_cov)
    out = []
    for form in forms:
        total = np.zeros(count)
        for policy, w in zip(policies, weights):
            u = np.hstack([np.asarray(mu(y[:, ms]), dtype=float).reshape(count, -1)
                           for mu, ms in zip(policy, info.measurement_slices())])
            value = (np.einsum("si,ij,sj->s", x, form.q, x) + 2.0 * np.einsum("si,ij,sj->s", x, form.s, u)
                     + np.einsum("si,ij,sj->s", u, form.r, u))
            total += w * value
        mean = float(np.mean(total))
        out.append((count, mean, float(np.sum((total - mean) ** 2))))
    return out


def _sqrt(cov: np.ndarray) -> np.ndarray:
    return linalg.psd_sqrt(cov)


def _combine(parts):
    """Chan's pairwise update of (count, mean, M2), applied in block order."""
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        delta = mb - mean
        tot = n + nb
        mean += delta * nb / tot
        m2 += m2b + delta * delta * n * nb / tot
        n = tot
    return n, mean, m2


def _estimate(problem, policies, forms, weights, samples, seed, workers):
    if problem.mode != GAUSSIAN or problem.stats is None:
        raise ValueError("Monte Carlo needs a gaussian-mode problem")
    if samples < 2:
        raise ValueError("need at least two samples")
    counts = [BLOCK_SIZE] * (samples // BLOCK_SIZE)
    if samples % BLOCK_SIZE:
        counts.append(samples % BLOCK_SIZE)

    def run(b):
        return _block_stats(problem, policies, forms, weights, counts[b], seed, b)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_block = list(pool.map(run, range(len(counts))))
    else:
        per_block = [run(b) for b in range(len(counts))]
    estimates = []
    for f in range(len(forms)):
        n, mean, m2 = _combine([blk[f] for blk in per_block])
        std = math.sqrt(m2 / (n - 1))
        estimates.append(McEstimate(mean, std / math.sqrt(n), n, seed))
    return estimates


def mc_expected_costs(problem: TeamProblem, policy: Policy, forms: Sequence[QuadraticForm],
                      samples: int = 100_000, seed: int = 0, workers: int = 1) -> list:
    """Sampled E[(x, u)^T M (x, u)] for several forms on the same draws."""
    return _estimate(problem, [policy], forms, [1.0], samples, seed, workers)


def mc_expected_cost(problem: TeamProblem, policy: Policy, form: QuadraticForm | None = None,
                     samples: int = 100_000, seed: int = 0, workers: int = 1) -> McEstimate:
    """Sampled E[(x, u)^T M (x, u)] with u_i = policy[i](y_i), y_i = C_i x + v_i.

    ``policy`` may be any per-player functions of the player's own
    measurement (rows are samples), linear or not.
    """
    form = problem.objective if form is None else form
    return mc_expected_costs(problem, policy, [form], samples, seed, workers)[0]


def mc_cost_difference(problem: TeamProblem, policy_a: Policy, policy_b: Policy,
                       form: QuadraticForm | None = None, samples: int = 100_000, seed: int = 0,
                       workers: int = 1) -> McEstimate:
    """Sampled E[cost(a) - cost(b)] with common random numbers."""
    form = problem.objective if form is None else form
    return _estimate(problem, [policy_a, policy_b], [form], [1.0, -1.0], samples, seed, workers)[0]


def projection_oracle(problem: TeamProblem) -> DecisionGain:
    """Best structured linear approximation of L x in the Q_uu-weighted norm.

    With coefficients z on the unit matrices E_k of each block, the normal
    equations are G z = h, G_kl = E[(E_k y)^T Q_uu (E_l y)] and
    h_k = E[(E_k y)^T Q_uu L x], all second moments of (x, y).
    """
    info = problem.info
    obj = problem.objective
    l = np.linalg.solve(obj.r, -obj.s.T)
    c = info.stacked_c()
    v = problem.stats.state_cov
    yy = c @ v @ c.T + problem.stats.noise(info.p)
    xy = v @ c.T
    entries = [(row, col) for rs, cs in zip(info.decision_slices(), info.measurement_slices())
               for row in range(rs.start, rs.stop) for col in range(cs.start, cs.stop)]
    # (E_k y)^T R (E_l y) = R[row_k, row_l] y_col_k y_col_l
    gram = np.array([[obj.r[rk, rl] * yy[ck, cl] for rl, cl in entries] for rk, ck in entries])
    lxy = obj.r @ l @ xy
    h = np.array([lxy[rk, ck] for rk, ck in entries])
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e14:
        raise np.linalg.LinAlgError("Gram matrix is singular")
    z = np.linalg.solve(gram, h)
    return DecisionGain.from_coefficients(z, info)


def example1_closed_form(x, gamma: float):
    """argmin u^2 subject to (x - u)^2 <= gamma, pointwise in x."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    x = np.asarray(x, dtype=float)
    root = math.sqrt(gamma)
    u = np.where(x * x > gamma, (np.abs(x) - root) * np.sign(x), 0.0)
    return float(u) if u.ndim == 0 else u


def example1_grid(gamma: float, x_grid, u_grid) -> np.ndarray:
    """For every x, the feasible grid u with the smallest u^2 (nan if none)."""
    x_grid = np.asarray(x_grid, dtype=float)
    u_grid = np.asarray(u_grid, dtype=float)
    out = np.full(x_grid.shape, np.nan)
    order = np.argsort(u_grid * u_grid, kind="stable")
    ranked = u_grid[order]
    for i, x in enumerate(x_grid):
        ok = (x - ranked) ** 2 <= gamma
        if np.any(ok):
            out[i] = ranked[np.argmax(ok)]
    return out


def congruence_max_eig(form: QuadraticForm, gain: DecisionGain, info: InformationStructure) -> float:
    """lambda_max([I; KC]^T M [I; KC]); negative iff the form is < 0 for all x != 0."""
    kc = gain.assemble(info) @ info.stacked_c()
    return linalg.lambda_max(form.congruence(kc))
