"""Lock-step execution of many filter runs on a linear time-invariant model.

The per-seed functions in :mod:`akf.filter` and :mod:`akf.adaptive` are the
reference implementation. This module evaluates the same recursions for a
whole stack of independent runs at once (leading axis = run), which keeps
Monte-Carlo grids over hundreds of seeds cheap. Only models whose Jacobians
are constant matrices qualify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from akf.adaptive import AdaptiveConfig
from akf.filter import DIVERGENCE_BOUND, PSD_TOL
from akf.numerics import JITTER_SCALE, NotPositiveDefiniteError


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def _outer(a: np.ndarray) -> np.ndarray:
    return a[:, :, None] * a[:, None, :]


def _not_pd(run: int, step: int) -> NotPositiveDefiniteError:
    err = NotPositiveDefiniteError(step)
    err.run = run
    return err


def _solve_spd(S: np.ndarray, B: np.ndarray, step: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Batched ``S X = B``; returns ``(X, jittered)`` per run.

    A failure raises NotPositiveDefiniteError with ``.run`` set to the run index.
    """
    m = S.shape[-1]
    jit = np.zeros(S.shape[0], dtype=bool)
    if m == 1:
        s = S[:, 0, 0]
        bad = ~(s > 0.0)
        if bad.any():
            s = s.copy()
            s[bad] += JITTER_SCALE * np.maximum(1.0, s[bad])
            if not (s > 0.0).all():
                raise _not_pd(int(np.argmin(s > 0.0)), step)
            jit = bad
        return B / s[:, None, None], jit
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        S = S.copy()
        for i in range(S.shape[0]):
            try:
                np.linalg.cholesky(S[i])
            except np.linalg.LinAlgError:
                delta = JITTER_SCALE * max(1.0, float(np.trace(S[i])) / m)
                S[i] += delta * np.eye(m)
                try:
                    np.linalg.cholesky(S[i])
                except np.linalg.LinAlgError:
                    raise _not_pd(i, step) from None
                jit[i] = True
    return np.linalg.solve(S, B), jit


def _min_eig(m: np.ndarray) -> np.ndarray:
    if m.shape[-1] == 1:
        return m[..., 0, 0]
    return np.linalg.eigvalsh(m)[..., 0]


def _repair(m: np.ndarray, cfg: AdaptiveConfig, active: np.ndarray) -> np.ndarray:
    m = np.where(active[:, None, None], m, 0.0)
    bad = ~(_min_eig(m) >= -PSD_TOL)
    if not bad.any():
        return m
    if cfg.psd_repair == "reject":
        raise RuntimeError("adapted covariance lost positive semidefiniteness")
    w, v = np.linalg.eigh(m[bad])
    m = m.copy()
    m[bad] = _sym((v * np.clip(w, 0.0, None)[:, None, :]) @ np.swapaxes(v, -1, -2))
    return m


@dataclass
class BatchResult:
    """Stacked per-run outputs; arrays have a leading run axis."""

    estimates: np.ndarray
    diverged: np.ndarray
    diverged_step: np.ndarray
    final_Q: np.ndarray
    final_R: np.ndarray
    nis: np.ndarray
    min_eig_P: np.ndarray
    min_eig_Q: np.ndarray
    min_eig_R: np.ndarray
    innovation_r_nonpsd: np.ndarray
    jitter_events: np.ndarray


def run_lti_batch(
    A: np.ndarray,
    H: np.ndarray,
    x0: np.ndarray,
    P0: np.ndarray,
    Q0: np.ndarray,
    R0: np.ndarray,
    measurements: np.ndarray,
    adaptive: AdaptiveConfig | None = None,
    joseph: bool = False,
    divergence_bound: float = DIVERGENCE_BOUND,
) -> BatchResult:
    """Run CEKF (``adaptive=None``) or AEKF on every measurement sequence.

    Args:
        A, H: constant transition and measurement matrices.
        x0: initial state, ``(n,)`` or ``(B, n)``.
        P0, Q0, R0: initial covariances, shared or stacked per run.
        measurements: ``(B, T, m)``; ``measurements[:, k-1]`` observes step ``k``.

    Runs that diverge are frozen at their last valid state and flagged.
    """
    Z = np.asarray(measurements, dtype=float)
    B, T, m = Z.shape
    n = A.shape[0]
    x = np.broadcast_to(np.asarray(x0, dtype=float), (B, n)).copy()
    P = np.broadcast_to(np.asarray(P0, dtype=float), (B, n, n)).copy()
    Q = np.broadcast_to(np.asarray(Q0, dtype=float), (B, n, n)).copy()
    R = np.broadcast_to(np.asarray(R0, dtype=float), (B, m, m)).copy()
    I = np.eye(n)
    At, Ht = A.T, H.T

    est = np.empty((B, T, n))
    nis = np.full((B, T), np.nan)
    eig_p = np.empty((B, T))
    eig_q = np.empty((B, T))
    eig_r = np.empty((B, T))
    diverged = np.zeros(B, dtype=bool)
    div_step = np.full(B, -1)
    r_nonpsd = np.zeros(B, dtype=int)
    jitter = np.zeros(B, dtype=int)
    s_emp = None

    for k in range(T):
        xp = x @ At
        Pp = _sym(A @ P @ At + Q)
        bad_prior = ~(np.abs(xp).max(axis=1) <= divergence_bound) | ~np.isfinite(Pp).all(axis=(1, 2))
        d = Z[:, k] - xp @ Ht
        PHt = Pp @ Ht
        S = _sym(H @ PHt + R)
        if bad_prior.any():
            # these runs stop here; keep their garbage out of the solve
            S = np.where(bad_prior[:, None, None], np.eye(m), S)
        KT, jit = _solve_spd(S, np.swapaxes(PHt, -1, -2), step=k + 1)
        jit &= ~(diverged | bad_prior)
        jitter += jit
        K = np.swapaxes(KT, -1, -2)
        xn = xp + np.einsum("bij,bj->bi", K, d)
        IKH = I - K @ H
        if joseph:
            Pn = _sym(IKH @ Pp @ np.swapaxes(IKH, -1, -2) + K @ R @ KT)
        else:
            Pn = _sym(IKH @ Pp)
        eps = Z[:, k] - xn @ Ht
        Sinv_d = np.linalg.solve(S, d[:, :, None])[:, :, 0] if m > 1 else d / S[:, 0]
        nis_k = np.einsum("bi,bi->b", d, Sinv_d)
        bad_post = ~(np.abs(xn).max(axis=1) <= divergence_bound)
        newly = (bad_prior | bad_post) & ~diverged
        div_step[newly] = k + 1
        diverged |= newly
        ok = ~diverged

        if adaptive is not None:
            a = adaptive.alpha
            Pr = Pp if adaptive.residual_cov == "prior" else Pn
            Rn, Qn = R, Q
            if adaptive.adapt_r:
                Rn = _repair(_sym(a * R + (1.0 - a) * (_outer(eps) + H @ Pr @ Ht)), adaptive, ok)
            if adaptive.adapt_q:
                Qn = _repair(_sym(a * Q + (1.0 - a) * _outer(np.einsum("bij,bj->bi", K, d))), adaptive, ok)
            prev = S if s_emp is None else s_emp
            s_emp = np.where(ok[:, None, None], _sym(a * prev + (1.0 - a) * _outer(d)), prev)
            r_est = np.where(ok[:, None, None], _sym(s_emp - H @ Pp @ Ht), 0.0)
            r_nonpsd += ~(_min_eig(r_est) >= -PSD_TOL)
        else:
            Rn, Qn = R, Q

        x[ok], P[ok], Q[ok], R[ok] = xn[ok], Pn[ok], Qn[ok], Rn[ok]
        nis[ok, k] = nis_k[ok]

        est[:, k] = x
        eig_p[:, k] = _min_eig(P)
        eig_q[:, k] = _min_eig(Q)
        eig_r[:, k] = _min_eig(R)

    return BatchResult(
        estimates=est,
        diverged=diverged,
        diverged_step=div_step,
        final_Q=Q,
        final_R=R,
        nis=nis,
        min_eig_P=eig_p,
        min_eig_Q=eig_q,
        min_eig_R=eig_r,
        innovation_r_nonpsd=r_nonpsd,
        jitter_events=jitter,
    )
