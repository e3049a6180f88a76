"""Built-in invariant checks run by ``akf selftest``.

Each check returns ``(passed, detail)``. Library functions are looked up
through their modules at call time so that a patched implementation is the
one being checked.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from akf import adaptive, filter as kf, models, numerics

CheckFn = Callable[[], tuple[bool, str]]
CHECKS: dict[str, tuple[str, CheckFn]] = {}


def check(name: str, description: str):
    def deco(fn: CheckFn) -> CheckFn:
        CHECKS[name] = (description, fn)
        return fn
    return deco


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def random_machine_point(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-0.05, 0.05),
                  rng.uniform(0.5, 1.5), rng.uniform(-0.5, 0.5)])
    u = np.array([rng.uniform(0.5, 1.0), rng.uniform(1.0, 3.0), rng.uniform(-1, 1), rng.uniform(-1, 1)])
    return x, u


@check("jacobian_linear", "linear model Jacobians match central differences at 100 random states")
def _jac_linear():
    rng = np.random.default_rng(11)
    m = models.linear_model(models.LinearModelParams())
    worst = 0.0
    for _ in range(100):
        x = rng.normal(scale=10.0, size=2)
        u = np.zeros(0)
        worst = max(worst, rel_err(m.transition_jacobian(x, u), numerics.fd_jacobian(lambda s: m.transition(s, u), x)))
        worst = max(worst, rel_err(m.measurement_jacobian(x, u), numerics.fd_jacobian(lambda s: m.measurement(s, u), x)))
    return worst <= 1e-5, f"max relative error {worst:.2e}"


@check("jacobian_machine", "machine model closed-form Jacobians match central differences at 100 random states")
def _jac_machine():
    rng = np.random.default_rng(12)
    m = models.machine_model(models.MachineParams(), "analytic")
    worst = 0.0
    for _ in range(100):
        x, u = random_machine_point(rng)
        worst = max(worst, rel_err(m.transition_jacobian(x, u), numerics.fd_jacobian(lambda s: m.transition(s, u), x)))
        worst = max(worst, rel_err(m.measurement_jacobian(x, u), numerics.fd_jacobian(lambda s: m.measurement(s, u), x)))
    return worst <= 1e-5, f"max relative error {worst:.2e}"


def _random_psd(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) * scale
    return a @ a.T


@check("psd_update_r", "adaptive R update stays PSD for random PSD inputs")
def _psd_r():
    rng = np.random.default_rng(13)
    for trial in range(500):
        m, n = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        R = _random_psd(rng, m, 10.0 ** rng.uniform(-4, 1))
        P = _random_psd(rng, n, 10.0 ** rng.uniform(-4, 2))
        H = rng.normal(size=(m, n))
        eps = rng.normal(size=m) * 10.0 ** rng.uniform(-3, 1)
        alpha = rng.uniform(0.0, 1.0)
        out = adaptive.update_r(R, eps, H, P, alpha)
        if not numerics.is_psd(out, kf.PSD_TOL):
            return False, f"non-PSD result on trial {trial} (min eig {numerics.min_eigenvalue(out):.3e})"
    return True, "500 random trials"


@check("psd_update_q", "adaptive Q update stays PSD for random PSD inputs")
def _psd_q():
    rng = np.random.default_rng(14)
    for trial in range(500):
        m, n = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        Q = _random_psd(rng, n, 10.0 ** rng.uniform(-6, 2))
        K = rng.normal(size=(n, m))
        d = rng.normal(size=m)
        out = adaptive.update_q(Q, K, d, rng.uniform(0.0, 1.0))
        if not numerics.is_psd(out, kf.PSD_TOL):
            return False, f"non-PSD result on trial {trial}"
    return True, "500 random trials"


def _reduction_gap(model, x0, Q0, R0, zs, us) -> float:
    cfg = adaptive.AdaptiveConfig(alpha=1.0)
    n = x0.size
    a = c = kf.init(x0, np.zeros((n, n)), Q0, R0)
    gap = 0.0
    for k, z in enumerate(zs):
        c = kf.step_cekf(c, z, model, us[k], us[k + 1])
        a, _ = adaptive.step_aekf(a, z, model, cfg, us[k], us[k + 1])
        gap = max(gap, float(np.max(np.abs(a.x - c.x))))
    return gap


@check("alpha1_reduction_linear", "AEKF with alpha=1 reproduces the CEKF on the tracking model")
def _red_linear():
    p = models.LinearModelParams()
    tr = models.simulate_linear_truth(p, 100, seed=5)
    us = np.zeros((101, 0))
    gap = _reduction_gap(models.linear_model(p), tr.states[0], 0.01 * p.Q_true, 100 * p.R_true, tr.measurements, us)
    return gap <= 1e-14, f"max |x_aekf - x_cekf| = {gap:.1e}"


@check("alpha1_reduction_machine", "AEKF with alpha=1 reproduces the CEKF on the machine model")
def _red_machine():
    p = models.MachineParams()
    tr = models.simulate_machine_truth(p, models.Disturbance("bus_dip", 1.0, 1.1, 0.5), duration=4.0, seed=5)
    m = models.machine_model(p, "analytic")
    gap = _reduction_gap(m, tr.states[0], 1e-3 * np.eye(4), np.diag([0.04**2] * 2), tr.measurements[1:], tr.inputs)
    return gap <= 1e-14, f"max |x_aekf - x_cekf| = {gap:.1e}"


@check("integrator_order", "Heun global error on dx/dt=-x shrinks about 4x per dt halving")
def _order():
    def global_err(dt):
        x = np.array([1.0])
        for _ in range(round(1.0 / dt)):
            x = models.modified_euler_step(lambda s: -s, x, dt)
        return abs(x[0] - math.exp(-1.0))
    ratio = global_err(0.01) / global_err(0.005)
    return 3.5 <= ratio <= 4.5, f"error ratio {ratio:.4f}"


@check("cekf_scale_invariance", "CEKF estimates are unchanged when Q and R are scaled together")
def _scale():
    p = models.LinearModelParams()
    tr = models.simulate_linear_truth(p, 100, seed=6)
    m = models.linear_model(p)
    ests = []
    for c in (0.01, 1.0, 100.0):
        fs = kf.init(tr.states[0], np.zeros((2, 2)), c * p.Q_true, c * p.R_true)
        xs = []
        for z in tr.measurements:
            fs = kf.step_cekf(fs, z, m)
            xs.append(fs.x)
        ests.append(np.array(xs))
    gap = max(rel_err(e, ests[1]) for e in ests)
    return gap <= 1e-9, f"relative gap {gap:.1e}"


def run_all(names=None) -> list[tuple[str, bool, str]]:
    out = []
    for name in names or CHECKS:
        desc, fn = CHECKS[name]
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash counts as a failure
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
