"""Small dense linear-algebra helpers shared by the filters and models.

Everything here works on plain ``numpy`` arrays. Covariance matrices are
kept exactly symmetric by routing them through :func:`symmetrize`.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

JITTER_SCALE = 1e-12


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when an innovation covariance cannot be factored even after jitter."""

    def __init__(self, step: int | None = None):
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(f"matrix not positive definite after jitter{where}")


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float array, rejecting NaN/Inf."""
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return ``(M + M^T) / 2``; the result is symmetric bit-for-bit."""
    if not isinstance(m, np.ndarray):
        m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"symmetrize needs a square matrix, got shape {m.shape}")
    return 0.5 * (m + m.T)


def _cho_solve(s: np.ndarray, b: np.ndarray) -> np.ndarray:
    if s.shape == (1, 1):
        # 1x1 Cholesky reduces to a positivity check and a division
        if not s[0, 0] > 0.0:
            raise np.linalg.LinAlgError("not positive definite")
        return b / s[0, 0]
    low = np.linalg.cholesky(s)
    y = solve_triangular(low, b, lower=True, check_finite=False)
    return solve_triangular(low.T, y, lower=False, check_finite=False)


def solve_spd(s: np.ndarray, b: np.ndarray, step: int | None = None) -> tuple[np.ndarray, bool]:
    """Solve ``S X = B`` for symmetric positive definite ``S`` via Cholesky.

    If the factorization fails, ``delta * I`` with
    ``delta = 1e-12 * max(1, trace(S) / dim)`` is added and the solve is
    retried once.

    Returns:
        ``(X, jittered)`` where ``jittered`` reports whether the retry was needed.

    Raises:
        NotPositiveDefiniteError: if the jittered matrix still fails to factor.
    """
    s = np.asarray(s, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        return _cho_solve(s, b), False
    except np.linalg.LinAlgError:
        pass
    n = s.shape[0]
    delta = JITTER_SCALE * max(1.0, float(np.trace(s)) / n)
    try:
        return _cho_solve(s + delta * np.eye(n), b), True
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(step) from None


def default_fd_step(x0: np.ndarray) -> float:
    return max(1e-6, 1e-7 * float(np.max(np.abs(x0), initial=0.0)))


def fd_jacobian(
    f: Callable[[np.ndarray], np.ndarray],
    x0,
    h: float | None = None,
) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``x0``.

    Entry ``(i, j)`` is ``(f_i(x0 + h e_j) - f_i(x0 - h e_j)) / (2h)``.
    The default step is ``max(1e-6, 1e-7 * ||x0||_inf)``.
    """
    x0 = np.asarray(x0, dtype=float)
    if h is None:
        h = default_fd_step(x0)
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    cols = []
    for j in range(x0.size):
        e = np.zeros_like(x0)
        e[j] = h
        fp = np.asarray(f(x0 + e), dtype=float)
        fm = np.asarray(f(x0 - e), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise FloatingPointError(f"non-finite function value while probing column {j}")
        cols.append((fp - fm) / (2.0 * h))
    return np.column_stack(cols)


def is_psd_fast(m: np.ndarray, tol: float = 0.0) -> bool:
    """Cholesky-based screen: True guarantees ``m + tol*I`` is positive definite."""
    if m.shape == (1, 1):
        return m[0, 0] >= -tol
    try:
        np.linalg.cholesky(m + tol * np.eye(m.shape[0]))
        return True
    except np.linalg.LinAlgError:
        return False


def min_eigenvalue(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(m)[0])


def is_psd(m: np.ndarray, tol: float = 0.0) -> bool:
    """True iff the smallest eigenvalue of symmetric ``m`` is at least ``-tol``."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if not np.isfinite(m).all():
        return False
    if m.shape == (1, 1):
        return bool(m[0, 0] >= -tol)
    return min_eigenvalue(m) >= -tol


def clip_psd(m: np.ndarray) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone by zeroing negative eigenvalues."""
    w, v = np.linalg.eigh(symmetrize(m))
    return symmetrize((v * np.clip(w, 0.0, None)) @ v.T)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix; tolerates singular input."""
    w, v = np.linalg.eigh(symmetrize(m))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
