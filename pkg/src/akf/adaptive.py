"""Adaptive EKF: per-step re-estimation of Q and R by covariance matching.

R follows the residual-based rule and Q the innovation-based rule, both
averaged with an exponential forgetting factor ``alpha``. The
innovation-based R estimate ``S_emp - H P^- H^T`` is computed alongside as
a diagnostic only; it can go indefinite and is never fed back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from akf.filter import (
    DEFAULT_OPTIONS,
    PSD_TOL,
    Correction,
    FilterOptions,
    FilterState,
    Prediction,
    SystemModel,
    cycle,
)
from akf.numerics import clip_psd, is_psd, is_psd_fast, symmetrize

DEFAULT_ALPHA = 0.3


class AdaptationError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdaptiveConfig:
    """Settings for the adaptive step.

    Attributes:
        alpha: forgetting factor in (0, 1]; larger keeps more of the previous estimate.
        adapt_q, adapt_r: switch each update on or off.
        psd_repair: ``"clip"`` zeroes negative eigenvalues of an updated
            covariance, ``"reject"`` raises instead.
        residual_cov: which state covariance enters the R update next to
            ``eps eps^T``: the a priori ``"prior"`` or the a posteriori ``"posterior"``.
    """

    alpha: float = DEFAULT_ALPHA
    adapt_q: bool = True
    adapt_r: bool = True
    psd_repair: Literal["clip", "reject"] = "clip"
    residual_cov: Literal["prior", "posterior"] = "posterior"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.psd_repair not in ("clip", "reject"):
            raise ValueError(f"unknown psd_repair policy {self.psd_repair!r}")
        if self.residual_cov not in ("prior", "posterior"):
            raise ValueError(f"unknown residual_cov {self.residual_cov!r}")


@dataclass(frozen=True)
class AdaptiveDiagnostics:
    innovation_r_estimate: np.ndarray
    innovation_r_psd: bool
    jitter_events: int
    innovation_cov_ema: np.ndarray
    repaired: bool = False


def update_r(R_prev, epsilon, Hk, P, alpha: float) -> np.ndarray:
    """``alpha R_prev + (1 - alpha) (eps eps^T + H P H^T)``, symmetrized."""
    eps = np.asarray(epsilon, dtype=float).ravel()
    Hk = np.atleast_2d(Hk)
    P = np.atleast_2d(P)
    R_prev = np.atleast_2d(R_prev)
    if R_prev.shape != (eps.size, eps.size) or Hk.shape != (eps.size, P.shape[0]):
        raise ValueError("update_r: inconsistent shapes")
    return symmetrize(alpha * R_prev + (1.0 - alpha) * (np.outer(eps, eps) + Hk @ P @ Hk.T))


def update_q(Q_prev, K, d, alpha: float) -> np.ndarray:
    """``alpha Q_prev + (1 - alpha) (K d)(K d)^T``, symmetrized."""
    Q_prev = np.atleast_2d(Q_prev)
    K = np.atleast_2d(K)
    d = np.asarray(d, dtype=float).ravel()
    if K.shape != (Q_prev.shape[0], d.size):
        raise ValueError("update_q: inconsistent shapes")
    w = K @ d
    return symmetrize(alpha * Q_prev + (1.0 - alpha) * np.outer(w, w))


def innovation_r_diagnostic(S_emp, Hk, P_prior) -> tuple[np.ndarray, bool]:
    """Innovation-based R estimate ``S_emp - H P^- H^T`` and whether it is PSD."""
    S_emp, Hk, P_prior = np.atleast_2d(S_emp, Hk, P_prior)
    est = symmetrize(S_emp - Hk @ P_prior @ Hk.T)
    return est, is_psd(est, PSD_TOL)


def _repair(m: np.ndarray, cfg: AdaptiveConfig, name: str, step: int) -> tuple[np.ndarray, bool]:
    if is_psd_fast(m, PSD_TOL) or is_psd(m, PSD_TOL):
        return m, False
    if cfg.psd_repair == "reject":
        raise AdaptationError(f"adapted {name} lost positive semidefiniteness at step {step}")
    return clip_psd(m), True


def adaptive_cycle(
    fs: FilterState,
    z,
    model: SystemModel,
    cfg: AdaptiveConfig,
    u_prev=(),
    u=None,
    s_emp: np.ndarray | None = None,
    options: FilterOptions = DEFAULT_OPTIONS,
) -> tuple[FilterState, Prediction, Correction, AdaptiveDiagnostics]:
    """One AEKF step, returning the intermediate prediction and correction too.

    Order: predict with ``Q_{k-1}``, correct with ``R_{k-1}``, then update R
    and after it Q; both new values take effect from the next step.
    ``s_emp`` is the running innovation-covariance average that feeds the
    diagnostic; pass back ``diagnostics.innovation_cov_ema`` each step.
    """
    _, pred, corr = cycle(fs, z, model, u_prev, u, options)
    a = cfg.alpha
    step = fs.k + 1

    R, Q = fs.R, fs.Q
    repaired = False
    if cfg.adapt_r:
        P_r = pred.P_prior if cfg.residual_cov == "prior" else corr.P_post
        R, rep = _repair(update_r(fs.R, corr.residual, corr.H, P_r, a), cfg, "R", step)
        repaired |= rep
    if cfg.adapt_q:
        Q, rep = _repair(update_q(fs.Q, corr.K, corr.innovation, a), cfg, "Q", step)
        repaired |= rep

    d = corr.innovation
    prev = corr.S if s_emp is None else s_emp
    ema = symmetrize(a * prev + (1.0 - a) * np.outer(d, d))
    r_est, r_psd = innovation_r_diagnostic(ema, corr.H, pred.P_prior)
    diag = AdaptiveDiagnostics(
        innovation_r_estimate=r_est,
        innovation_r_psd=r_psd,
        jitter_events=int(corr.jittered),
        innovation_cov_ema=ema,
        repaired=repaired,
    )
    new = FilterState(k=step, x=corr.x_post, P=corr.P_post, Q=Q, R=R)
    return new, pred, corr, diag


def step_aekf(
    fs: FilterState,
    z,
    model: SystemModel,
    cfg: AdaptiveConfig = AdaptiveConfig(),
    u_prev=(),
    u=None,
    s_emp: np.ndarray | None = None,
    options: FilterOptions = DEFAULT_OPTIONS,
) -> tuple[FilterState, AdaptiveDiagnostics]:
    new, _, _, diag = adaptive_cycle(fs, z, model, cfg, u_prev, u, s_emp, options)
    return new, diag
