"""Problem data model for linear-quadratic team decision problems.

A team of N players chooses u = (u_1, ..., u_N), player i seeing only
y_i = C_i x (+ v_i in the Gaussian setting).  Linear policies are
block-diagonal gains K = diag(K_1, ..., K_N) acting on the stacked
measurement y; every solver in the package searches over that set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg

SYM_TOL = 1e-12

GAUSSIAN = "gaussian"
MINIMAX = "minimax"


class ProblemError(ValueError):
    """A problem failed validation; ``diagnostics`` lists every failed check."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


def _matrix(a, name: str) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {a.shape}")
    return a


def _relative_asymmetry(a: np.ndarray) -> float:
    if a.shape[0] != a.shape[1] or a.size == 0:
        return 0.0
    scale = np.max(np.abs(a))
    if scale == 0.0 or not np.all(np.isfinite(a)):
        return 0.0
    return float(np.max(np.abs(a - a.T)) / scale)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T) if a.shape[0] == a.shape[1] else a


@dataclass(frozen=True)
class QuadraticForm:
    """The block matrix [[q, s], [s^T, r]] acting on the stacked vector (x, u)."""

    q: np.ndarray
    s: np.ndarray
    r: np.ndarray
    asymmetry: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        q = _matrix(self.q, "q")
        s = _matrix(self.s, "s")
        r = _matrix(self.r, "r")
        object.__setattr__(self, "asymmetry", {"q": _relative_asymmetry(q), "r": _relative_asymmetry(r)})
        object.__setattr__(self, "q", _sym(q))
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "r", _sym(r))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def m(self) -> int:
        return self.r.shape[0]

    def matrix(self) -> np.ndarray:
        return np.block([[self.q, self.s], [self.s.T, self.r]])

    def scaled(self, alpha: float) -> QuadraticForm:
        return QuadraticForm(alpha * self.q, alpha * self.s, alpha * self.r)

    def shifted(self, gamma: float) -> QuadraticForm:
        """The form with q replaced by q - gamma * I."""
        return QuadraticForm(self.q - gamma * np.eye(self.n), self.s, self.r)

    def congruence(self, kc: np.ndarray) -> np.ndarray:
        """[I; KC]^T M [I; KC] for the n x n-shaped product KC (m x n)."""
        t = self.s @ kc
        return linalg.symmetrize(self.q + t + t.T + kc.T @ self.r @ kc)


@dataclass(frozen=True)
class InformationStructure:
    decision_dims: tuple
    measurement_maps: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.decision_dims)
        maps = tuple(_matrix(c, f"measurement_maps[{i}]") for i, c in enumerate(self.measurement_maps))
        if len(dims) != len(maps):
            raise ValueError(f"{len(dims)} decision dims but {len(maps)} measurement maps")
        object.__setattr__(self, "decision_dims", dims)
        object.__setattr__(self, "measurement_maps", maps)

    @property
    def num_players(self) -> int:
        return len(self.decision_dims)

    @property
    def measurement_dims(self) -> tuple:
        return tuple(c.shape[0] for c in self.measurement_maps)

    @property
    def n(self) -> int:
        return self.measurement_maps[0].shape[1] if self.measurement_maps else 0

    @property
    def m(self) -> int:
        return sum(self.decision_dims)

    @property
    def p(self) -> int:
        return sum(self.measurement_dims)

    @property
    def num_params(self) -> int:
        return sum(mi * pi for mi, pi in zip(self.decision_dims, self.measurement_dims))

    def stacked_c(self) -> np.ndarray:
        return np.vstack(self.measurement_maps)

    def decision_slices(self) -> list:
        return _slices(self.decision_dims)

    def measurement_slices(self) -> list:
        return _slices(self.measurement_dims)

    def with_maps(self, maps) -> InformationStructure:
        return InformationStructure(self.decision_dims, tuple(maps))


def _slices(dims) -> list:
    out, start = [], 0
    for d in dims:
        out.append(slice(start, start + d))
        start += d
    return out


@dataclass(frozen=True)
class GaussianStatistics:
    state_cov: np.ndarray
    noise_cov: np.ndarray | None = None

    def __post_init__(self):
        v = _matrix(self.state_cov, "state_cov")
        object.__setattr__(self, "state_cov", _sym(v))
        if self.noise_cov is not None:
            object.__setattr__(self, "noise_cov", _sym(_matrix(self.noise_cov, "noise_cov")))

    @property
    def has_noise(self) -> bool:
        return self.noise_cov is not None and bool(np.any(self.noise_cov != 0))

    def noise(self, p: int) -> np.ndarray:
        return np.zeros((p, p)) if self.noise_cov is None else self.noise_cov

    def state_sqrt(self) -> np.ndarray:
        return linalg.psd_sqrt(self.state_cov)


@dataclass(frozen=True)
class TeamProblem:
    """Objective form, constraints (form, bound) and the information pattern.

    In Gaussian mode the bounds limit expectations under ``stats``; in
    minimax mode a bound g on form M means [x; u]^T M [x; u] <= g |x|^2
    for every x.
    """

    objective: QuadraticForm
    constraints: tuple = ()
    info: InformationStructure | None = None
    stats: GaussianStatistics | None = None
    mode: str = GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple((f, float(g)) for f, g in self.constraints))

    @property
    def forms(self) -> list:
        return [self.objective] + [f for f, _ in self.constraints]

    @property
    def bounds(self) -> list:
        return [g for _, g in self.constraints]

    def replace(self, **changes) -> TeamProblem:
        fields = dict(objective=self.objective, constraints=self.constraints, info=self.info,
                      stats=self.stats, mode=self.mode)
        fields.update(changes)
        return TeamProblem(**fields)


@dataclass(frozen=True)
class DecisionGain:
    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(_matrix(b, f"blocks[{i}]") for i, b in enumerate(self.blocks)))

    def assemble(self, info: InformationStructure | None = None) -> np.ndarray:
        return assemble_gain(self.blocks, info)

    def coefficients(self) -> np.ndarray:
        """Coordinates in the gain basis (row-major within blocks, player order)."""
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([b.ravel() for b in self.blocks])

    @classmethod
    def from_coefficients(cls, z, info: InformationStructure) -> DecisionGain:
        z = np.asarray(z, dtype=float)
        if z.size != info.num_params:
            raise ValueError(f"expected {info.num_params} coefficients, got {z.size}")
        blocks, start = [], 0
        for mi, pi in zip(info.decision_dims, info.measurement_dims):
            blocks.append(z[start:start + mi * pi].reshape(mi, pi))
            start += mi * pi
        return cls(tuple(blocks))


# -- Validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    field: str
    check: str

    def __str__(self) -> str:
        return f"{self.field} {self.check}"


def _norm2(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def _min_eig(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(a)[0]) if a.size else 0.0


def _check_form(form: QuadraticForm, owner: str, n: int | None, m: int | None, objective: bool,
                full_psd: bool) -> list:
    out = []
    q, s, r = form.q, form.s, form.r
    for name, a in (("q", q), ("s", s), ("r", r)):
        if not np.all(np.isfinite(a)):
            out.append(Diagnostic(owner, f"{name} has non-finite entries"))
    if out:
        return out
    if q.shape[0] != q.shape[1]:
        out.append(Diagnostic(owner, f"q not square {q.shape}"))
    if r.shape[0] != r.shape[1]:
        out.append(Diagnostic(owner, f"r not square {r.shape}"))
    if out:
        return out
    if s.shape != (q.shape[0], r.shape[0]):
        out.append(Diagnostic(owner, f"s has shape {s.shape}, expected {(q.shape[0], r.shape[0])}"))
    if n is not None and q.shape[0] != n:
        out.append(Diagnostic(owner, f"q has dimension {q.shape[0]}, expected n={n}"))
    if m is not None and r.shape[0] != m:
        out.append(Diagnostic(owner, f"r has dimension {r.shape[0]}, expected m={m}"))
    for name in ("q", "r"):
        if form.asymmetry.get(name, 0.0) > SYM_TOL:
            out.append(Diagnostic(owner, f"asymmetric {name}"))
    if out:
        return out
    lam = _min_eig(r)
    if objective:
        if not lam > 0:
            out.append(Diagnostic(owner, "r not positive definite"))
    elif lam < -linalg.PSD_TOL * _norm2(r):
        out.append(Diagnostic(owner, "r not positive semidefinite"))
    if full_psd:
        full = form.matrix()
        if _min_eig(full) < -linalg.PSD_TOL * _norm2(full):
            out.append(Diagnostic(owner, "block matrix not positive semidefinite"))
    return out


def _check_info(info: InformationStructure) -> list:
    out = []
    if info.num_players == 0:
        return [Diagnostic("info", "has no players")]
    for i, (mi, c) in enumerate(zip(info.decision_dims, info.measurement_maps)):
        if mi < 1:
            out.append(Diagnostic(f"info.decision_dims[{i}]", "must be >= 1"))
        if c.shape[0] < 1:
            out.append(Diagnostic(f"info.measurement_maps[{i}]", "must have at least one row"))
        if c.shape[1] != info.n:
            out.append(Diagnostic(f"info.measurement_maps[{i}]", f"has {c.shape[1]} columns, expected {info.n}"))
        if not np.all(np.isfinite(c)):
            out.append(Diagnostic(f"info.measurement_maps[{i}]", "has non-finite entries"))
    return out


def _check_cov(a: np.ndarray, name: str, dim: int) -> list:
    if a.shape != (dim, dim):
        return [Diagnostic(name, f"has shape {a.shape}, expected {(dim, dim)}")]
    if not np.all(np.isfinite(a)):
        return [Diagnostic(name, "has non-finite entries")]
    if _min_eig(a) < -linalg.PSD_TOL * _norm2(a):
        return [Diagnostic(name, "not positive semidefinite")]
    return []


def validate(problem: TeamProblem) -> list:
    """Every violated invariant of ``problem`` as a Diagnostic; never raises."""
    try:
        return _validate(problem)
    except Exception as exc:  # validation must be total
        return [Diagnostic("problem", f"could not be checked: {exc}")]


def _validate(problem: TeamProblem) -> list:
    out = []
    info = problem.info
    if info is None:
        out.append(Diagnostic("info", "missing"))
        n = m = None
    else:
        out += _check_info(info)
        n, m = info.n, info.m
    if problem.mode not in (GAUSSIAN, MINIMAX):
        out.append(Diagnostic("mode", f"unknown mode {problem.mode!r}"))
    gaussian = problem.mode == GAUSSIAN
    out += _check_form(problem.objective, "objective", n, m, objective=True,
                       full_psd=gaussian and bool(problem.constraints))
    for j, (form, bound) in enumerate(problem.constraints):
        owner = f"constraints[{j}]"
        out += _check_form(form, owner, n, m, objective=False, full_psd=False)
        if not np.isfinite(bound):
            out.append(Diagnostic(owner, "bound is not finite"))
    if gaussian:
        if problem.stats is None:
            out.append(Diagnostic("stats", "missing in gaussian mode"))
        elif n is not None:
            out += _check_cov(problem.stats.state_cov, "stats.state_cov", n)
            if problem.stats.noise_cov is not None and info is not None:
                out += _check_cov(problem.stats.noise_cov, "stats.noise_cov", info.p)
    elif problem.stats is not None:
        out.append(Diagnostic("stats", "must be absent in minimax mode"))
    return out


def check(problem: TeamProblem) -> None:
    diagnostics = validate(problem)
    if diagnostics:
        raise ProblemError(diagnostics)


# -- Structured gains ---------------------------------------------------------

def assemble_gain(blocks: Sequence, info: InformationStructure | None = None) -> np.ndarray:
    """K = diag(K_1, ..., K_N) as a dense m x p matrix."""
    blocks = [_matrix(b, f"blocks[{i}]") for i, b in enumerate(blocks)]
    if info is not None:
        expected = list(zip(info.decision_dims, info.measurement_dims))
        got = [b.shape for b in blocks]
        if got != expected:
            raise ValueError(f"block shapes {got} do not match information structure {expected}")
    m = sum(b.shape[0] for b in blocks)
    p = sum(b.shape[1] for b in blocks)
    k = np.zeros((m, p))
    r = c = 0
    for b in blocks:
        k[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return k


def project_gain(k, info: InformationStructure) -> DecisionGain:
    """Keep the diagonal blocks of a dense m x p gain, dropping the rest."""
    k = _matrix(k, "K")
    if k.shape != (info.m, info.p):
        raise ValueError(f"gain has shape {k.shape}, expected {(info.m, info.p)}")
    return DecisionGain(tuple(k[rs, cs].copy() for rs, cs in zip(info.decision_slices(), info.measurement_slices())))


def gain_basis(info: InformationStructure) -> list:
    """Unit matrices E_(row, col) inside each block; row-major, players in order.

    The k-th entry corresponds to coefficient k of DecisionGain.coefficients.
    """
    basis = []
    for rs, cs in zip(info.decision_slices(), info.measurement_slices()):
        for row in range(rs.start, rs.stop):
            for col in range(cs.start, cs.stop):
                e = np.zeros((info.m, info.p))
                e[row, col] = 1.0
                basis.append(e)
    return basis


# -- Noise augmentation -------------------------------------------------------

@dataclass(frozen=True)
class Augmented:
    """Noisy problem rewritten on the state w = (x, v) with y = C_aug w."""

    forms: list
    info: InformationStructure
    cov: np.ndarray


def augment(problem: TeamProblem) -> Augmented:
    """Absorb measurement noise into an enlarged state.

    Without noise the original forms and state covariance are returned.
    """
    info, stats = problem.info, problem.stats
    if stats is None:
        raise ValueError("augmentation needs Gaussian statistics")
    if not stats.has_noise:
        return Augmented(problem.forms, info, stats.state_cov)
    n, p = info.n, info.p
    maps = []
    for c, ms in zip(info.measurement_maps, info.measurement_slices()):
        e = np.zeros((c.shape[0], p))
        e[:, ms] = np.eye(c.shape[0])
        maps.append(np.hstack([c, e]))
    forms = []
    for f in problem.forms:
        q = np.zeros((n + p, n + p))
        q[:n, :n] = f.q
        s = np.vstack([f.s, np.zeros((p, f.m))])
        forms.append(QuadraticForm(q, s, f.r))
    cov = np.zeros((n + p, n + p))
    cov[:n, :n] = stats.state_cov
    cov[n:, n:] = stats.noise_cov
    return Augmented(forms, info.with_maps(maps), cov)
