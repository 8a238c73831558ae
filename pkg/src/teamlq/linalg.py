"""Dense symmetric linear algebra used by the solvers.

The eigensolver is a cyclic Jacobi method.  It is slower than LAPACK but
has high relative accuracy and serves as an independent reference for the
interior-point engine, which calls LAPACK directly for speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PSD_TOL = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot is not positive."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SymEig:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def symmetrize(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def _check_square(a: np.ndarray, name: str = "A") -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")


def sym_eig(a, tol: float = 1e-15, max_sweeps: int = 60) -> SymEig:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Eigenvalues are returned in ascending order with matching orthonormal
    eigenvector columns.  Raises ConvergenceError if the off-diagonal mass
    has not been annihilated after ``max_sweeps`` sweeps.
    """
    a = symmetrize(a)
    _check_square(a)
    n = a.shape[0]
    v = np.eye(n)
    if n == 0:
        return SymEig(np.zeros(0), v)
    a = a.copy()
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return SymEig(np.zeros(n), v)

    offdiag = ~np.eye(n, dtype=bool)
    for sweep in range(max_sweeps):
        off = math.sqrt(float(np.sum(a[offdiag] ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                g = 100.0 * abs(apq)
                if sweep > 3 and abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q]):
                    a[p, q] = a[q, p] = 0.0
                    continue
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise ConvergenceError(f"Jacobi sweeps did not converge in {max_sweeps} sweeps")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SymEig(w[order], v[:, order])


def lambda_max(a) -> float:
    return float(sym_eig(a).eigenvalues[-1])


def lambda_min(a) -> float:
    return float(sym_eig(a).eigenvalues[0])


def is_psd(a, tol: float = PSD_TOL) -> bool:
    a = symmetrize(a)
    if a.size == 0:
        return True
    return lambda_min(a) >= -tol * max(np.linalg.norm(a, 2), 1e-300)


def psd_sqrt(a, tol: float = PSD_TOL) -> np.ndarray:
    """Symmetric PSD square root; small negative eigenvalues are clipped to 0."""
    a = symmetrize(a)
    _check_square(a)
    if a.size == 0:
        return a.copy()
    eig = sym_eig(a)
    norm = max(abs(eig.eigenvalues[0]), abs(eig.eigenvalues[-1]))
    if eig.eigenvalues[0] < -tol * norm:
        raise ValueError(f"matrix is indefinite (smallest eigenvalue {eig.eigenvalues[0]:.3e})")
    w = np.sqrt(np.clip(eig.eigenvalues, 0.0, None))
    v = eig.eigenvectors
    return symmetrize((v * w) @ v.T)


def psd_factor(a, tol: float = PSD_TOL) -> np.ndarray:
    """Return F with rank(a) rows such that F^T F = a (a symmetric PSD)."""
    a = symmetrize(a)
    _check_square(a)
    eig = sym_eig(a)
    norm = max(np.max(np.abs(eig.eigenvalues), initial=0.0), 1e-300)
    keep = eig.eigenvalues > tol * norm
    w = np.sqrt(eig.eigenvalues[keep])
    return (eig.eigenvectors[:, keep] * w).T


def cholesky(a) -> np.ndarray:
    """Lower-triangular L with L L^T = a."""
    a = symmetrize(a)
    _check_square(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc


def solve_spd(a, b) -> np.ndarray:
    lower = cholesky(a)
    b = np.asarray(b, dtype=float)
    y = np.linalg.solve(lower, b)
    return np.linalg.solve(lower.T, y)


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def svec(s) -> np.ndarray:
    """Stack the upper triangle row by row, off-diagonals scaled by sqrt(2).

    With this scaling svec(A) @ svec(B) == trace(A @ B) for symmetric A, B.
    """
    s = np.asarray(s, dtype=float)
    _check_square(s, "S")
    iu = np.triu_indices(s.shape[0])
    scale = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
    return s[iu] * scale


def smat(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    n = int(round((math.sqrt(8 * v.size + 1) - 1) / 2))
    if n * (n + 1) // 2 != v.size:
        raise ValueError(f"length {v.size} is not a triangular number")
    iu = np.triu_indices(n)
    scale = np.where(iu[0] == iu[1], 1.0, 1.0 / math.sqrt(2.0))
    out = np.zeros((n, n))
    out[iu] = v * scale
    return out + np.triu(out, 1).T


def sym_basis(n: int) -> list[np.ndarray]:
    """Orthonormal basis of symmetric n x n matrices, in svec order."""
    return [smat(e) for e in np.eye(n * (n + 1) // 2)]
