"""Conventional extended Kalman filter: initialization, prediction, correction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from akf.numerics import as_matrix, is_psd, solve_spd, symmetrize

DIVERGENCE_BOUND = 1e6
PSD_TOL = 1e-10

Fn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class FilterError(RuntimeError):
    pass


class DivergenceError(FilterError):
    """The estimate became non-finite or left the divergence bound."""

    def __init__(self, step: int, reason: str):
        self.step = step
        super().__init__(f"filter diverged at step {step}: {reason}")


@dataclass(frozen=True)
class SystemModel:
    """Discrete state-space model ``x_k = f(x_{k-1}, u_{k-1})``, ``z_k = h(x_k, u_k)``.

    All four callables take ``(x, u)``. Jacobians return arrays of shape
    ``(state_dim, state_dim)`` and ``(meas_dim, state_dim)``.
    """

    state_dim: int
    input_dim: int
    meas_dim: int
    transition: Fn
    measurement: Fn
    transition_jacobian: Fn
    measurement_jacobian: Fn
    name: str = "model"


@dataclass(frozen=True)
class FilterState:
    k: int
    x: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class Prediction:
    x_prior: np.ndarray
    P_prior: np.ndarray
    F: np.ndarray


@dataclass(frozen=True)
class Correction:
    innovation: np.ndarray
    S: np.ndarray
    K: np.ndarray
    H: np.ndarray
    x_post: np.ndarray
    P_post: np.ndarray
    residual: np.ndarray
    jittered: bool = False


@dataclass(frozen=True)
class FilterOptions:
    """Numerical switches that are not part of the textbook recursion."""

    joseph: bool = False
    divergence_bound: float = DIVERGENCE_BOUND


DEFAULT_OPTIONS = FilterOptions()


def _check_cov(m: np.ndarray, n: int, name: str) -> np.ndarray:
    m = as_matrix(m, name)
    if m.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got {m.shape}")
    m = symmetrize(m)
    if not is_psd(m, PSD_TOL):
        raise ValueError(f"{name} is not positive semidefinite")
    return m


def init(x0, P0, Q0, R0) -> FilterState:
    """Build the step-0 filter state after validating shapes and PSD-ness."""
    x0 = np.asarray(x0, dtype=float).ravel()
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 contains non-finite entries")
    n = x0.size
    P0 = _check_cov(P0, n, "P0")
    Q0 = _check_cov(Q0, n, "Q0")
    R0 = as_matrix(R0, "R0")
    R0 = _check_cov(R0, R0.shape[0], "R0")
    return FilterState(k=0, x=x0, P=P0, Q=Q0, R=R0)


def _guard(x: np.ndarray, step: int, bound: float) -> None:
    peak = np.abs(x).max()
    # NaN fails every comparison, so it lands here too
    if not peak <= bound:
        reason = f"state magnitude above {bound:g}" if np.isfinite(peak) else "non-finite state"
        raise DivergenceError(step, reason)


def predict(fs: FilterState, u, model: SystemModel, options: FilterOptions = DEFAULT_OPTIONS) -> Prediction:
    """Propagate the posterior one step; the Jacobian is taken at the posterior."""
    u = np.asarray(u, dtype=float)
    x_prior = np.asarray(model.transition(fs.x, u), dtype=float)
    _guard(x_prior, fs.k + 1, options.divergence_bound)
    F = model.transition_jacobian(fs.x, u)
    P_prior = symmetrize(F @ fs.P @ F.T + fs.Q)
    if not np.isfinite(P_prior).all():
        raise DivergenceError(fs.k + 1, "non-finite prior covariance")
    return Prediction(x_prior=x_prior, P_prior=P_prior, F=F)


def correct(
    pred: Prediction,
    z,
    u,
    model: SystemModel,
    R: np.ndarray,
    step: int | None = None,
    options: FilterOptions = DEFAULT_OPTIONS,
) -> Correction:
    """Measurement update. The measurement Jacobian is taken at the prior."""
    z = np.asarray(z, dtype=float).ravel()
    if not np.isfinite(z).all():
        raise ValueError(f"non-finite measurement at step {step}")
    u = np.asarray(u, dtype=float)
    x_prior, P_prior = pred.x_prior, pred.P_prior
    Hk = model.measurement_jacobian(x_prior, u)
    d = z - model.measurement(x_prior, u)
    PHt = P_prior @ Hk.T
    S = symmetrize(Hk @ PHt + R)
    # K = P H^T S^-1, computed as (S^-1 H P)^T since S is symmetric
    KT, jittered = solve_spd(S, PHt.T, step=step)
    K = KT.T
    x_post = x_prior + K @ d
    _guard(x_post, -1 if step is None else step, options.divergence_bound)
    IKH = np.eye(x_prior.size) - K @ Hk
    if options.joseph:
        P_post = symmetrize(IKH @ P_prior @ IKH.T + K @ R @ K.T)
    else:
        P_post = symmetrize(IKH @ P_prior)
    eps = z - model.measurement(x_post, u)
    return Correction(
        innovation=d, S=S, K=K, H=Hk, x_post=x_post, P_post=P_post, residual=eps, jittered=jittered
    )


def cycle(
    fs: FilterState,
    z,
    model: SystemModel,
    u_prev=(),
    u=None,
    options: FilterOptions = DEFAULT_OPTIONS,
) -> tuple[FilterState, Prediction, Correction]:
    """Predict then correct with the Q and R stored in ``fs``.

    ``u_prev`` drives the transition out of step ``k-1``; ``u`` enters the
    measurement function at step ``k`` and defaults to ``u_prev``.
    """
    if u is None:
        u = u_prev
    pred = predict(fs, u_prev, model, options)
    corr = correct(pred, z, u, model, fs.R, step=fs.k + 1, options=options)
    new = FilterState(k=fs.k + 1, x=corr.x_post, P=corr.P_post, Q=fs.Q, R=fs.R)
    return new, pred, corr


def step_cekf(
    fs: FilterState, z, model: SystemModel, u_prev=(), u=None, options: FilterOptions = DEFAULT_OPTIONS
) -> FilterState:
    """One conventional EKF cycle; Q and R are carried over unchanged."""
    return cycle(fs, z, model, u_prev, u, options)[0]
