"""Concrete system models and the truth generators that drive them.

Two models are provided:

* a constant-velocity tracker (position/velocity, position observed), and
* a 4th-order synchronous machine discretized with Heun's method, observed
  through terminal-voltage phasors, with a single machine / infinite bus
  (SMIB) network used only to generate truth data.

Machine state order is ``[delta, dw, eq', ed']`` and input order is
``[T_m, E_fd, i_d, i_q]``; all electrical quantities are per unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, NamedTuple

import numpy as np

from akf.filter import SystemModel
from akf.numerics import fd_jacobian, psd_sqrt

NOISE_LEVEL = 0.04
# constant E_fd (no AVR) leaves little steady-state margin at heavier loading
DEFAULT_P_MECH = 0.5


# --------------------------------------------------------------------------
# Constant-velocity tracker
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearModelParams:
    q0: float = 0.01
    r0: float = 0.1
    dt: float = 1.0

    def __post_init__(self):
        if self.q0 < 0 or self.r0 < 0 or self.dt <= 0:
            raise ValueError("need q0 >= 0, r0 >= 0 and dt > 0")

    @property
    def A(self) -> np.ndarray:
        return np.array([[1.0, self.dt], [0.0, 1.0]])

    @property
    def H(self) -> np.ndarray:
        return np.array([[1.0, 0.0]])

    @property
    def Q_true(self) -> np.ndarray:
        dt = self.dt
        return self.q0 * np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])

    @property
    def R_true(self) -> np.ndarray:
        return np.array([[self.r0]])


def linear_model(p: LinearModelParams) -> SystemModel:
    A, H = p.A, p.H
    return SystemModel(
        state_dim=2,
        input_dim=0,
        meas_dim=1,
        transition=lambda x, u: A @ x,
        measurement=lambda x, u: H @ x,
        transition_jacobian=lambda x, u: A,
        measurement_jacobian=lambda x, u: H,
        name="linear",
    )


@dataclass(frozen=True)
class LinearTruth:
    """``states[0]`` is ``x_0``; ``measurements[k-1]`` observes ``states[k]``."""

    states: np.ndarray
    measurements: np.ndarray


def simulate_linear_truth(p: LinearModelParams, steps: int, seed: int, x0=None) -> LinearTruth:
    if steps < 1:
        raise ValueError("steps must be at least 1")
    rng = np.random.default_rng(seed)
    A, H = p.A, p.H
    Lq = psd_sqrt(p.Q_true)
    sr = math.sqrt(p.r0)
    w = rng.standard_normal((steps, 2)) @ Lq.T
    v = sr * rng.standard_normal((steps, 1))
    states = np.empty((steps + 1, 2))
    states[0] = np.zeros(2) if x0 is None else np.asarray(x0, dtype=float)
    for k in range(1, steps + 1):
        states[k] = A @ states[k - 1] + w[k - 1]
    meas = states[1:] @ H.T + v
    return LinearTruth(states=states, measurements=meas)


# --------------------------------------------------------------------------
# Synchronous machine
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MachineParams:
    H_inertia: float = 6.5
    K_D: float = 1.0
    x_d: float = 1.8
    x_q: float = 1.7
    x_d_prime: float = 0.3
    x_q_prime: float = 0.55
    T_d0_prime: float = 8.0
    T_q0_prime: float = 0.4
    f0: float = 60.0
    dt: float = 0.04

    def __post_init__(self):
        positive = (self.H_inertia, self.x_d_prime, self.x_q_prime, self.T_d0_prime,
                    self.T_q0_prime, self.f0, self.dt)
        if min(positive) <= 0 or self.K_D < 0:
            raise ValueError("machine parameters must be positive (K_D non-negative)")
        if self.x_d < self.x_d_prime or self.x_q < self.x_q_prime:
            raise ValueError("synchronous reactances must not be below transient ones")

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * self.f0


class MachineState(NamedTuple):
    delta: float
    dw: float
    eq_prime: float
    ed_prime: float


class MachineInput(NamedTuple):
    T_m: float
    E_fd: float
    i_d: float
    i_q: float


class PhasorMeasurement(NamedTuple):
    e_r: float
    e_i: float


def electrical_torque(eq_p: float, ed_p: float, i_d: float, i_q: float, p: MachineParams) -> float:
    """Air-gap torque with stator resistance neglected."""
    return ed_p * i_d + eq_p * i_q + (p.x_q_prime - p.x_d_prime) * i_d * i_q


def machine_derivatives(x, u, p: MachineParams) -> np.ndarray:
    delta, dw, eq_p, ed_p = x
    T_m, E_fd, i_d, i_q = u
    T_e = electrical_torque(eq_p, ed_p, i_d, i_q, p)
    return np.array([
        p.omega0 * dw,
        (T_m - T_e - p.K_D * dw) / (2.0 * p.H_inertia),
        (E_fd - eq_p - (p.x_d - p.x_d_prime) * i_d) / p.T_d0_prime,
        (-ed_p + (p.x_q - p.x_q_prime) * i_q) / p.T_q0_prime,
    ])


def machine_derivative_jacobian(x, u, p: MachineParams) -> np.ndarray:
    """Analytic ``d(machine_derivatives)/dx``; it depends on the currents only."""
    _, _, i_d, i_q = u
    two_h = 2.0 * p.H_inertia
    return np.array([
        [0.0, p.omega0, 0.0, 0.0],
        [0.0, -p.K_D / two_h, -i_q / two_h, -i_d / two_h],
        [0.0, 0.0, -1.0 / p.T_d0_prime, 0.0],
        [0.0, 0.0, 0.0, -1.0 / p.T_q0_prime],
    ])


def _terminal_dq(x, u, p: MachineParams) -> tuple[float, float]:
    _, _, eq_p, ed_p = x
    _, _, i_d, i_q = u
    return ed_p + p.x_q_prime * i_q, eq_p - p.x_d_prime * i_d


def machine_measurement(x, u, p: MachineParams) -> np.ndarray:
    """Terminal voltage phasor ``[e_r, e_i]`` in the network frame."""
    v_d, v_q = _terminal_dq(x, u, p)
    s, c = math.sin(x[0]), math.cos(x[0])
    return np.array([v_d * s + v_q * c, v_q * s - v_d * c])


def machine_measurement_jacobian(x, u, p: MachineParams) -> np.ndarray:
    v_d, v_q = _terminal_dq(x, u, p)
    s, c = math.sin(x[0]), math.cos(x[0])
    return np.array([
        [v_d * c - v_q * s, 0.0, c, s],
        [v_q * c + v_d * s, 0.0, s, -c],
    ])


def modified_euler_step(deriv: Callable[[np.ndarray], np.ndarray], x, dt: float) -> np.ndarray:
    """Heun predictor-corrector step."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(deriv(x), dtype=float)
    x_pred = x + dt * f0
    f1 = np.asarray(deriv(x_pred), dtype=float)
    if not (np.all(np.isfinite(f0)) and np.all(np.isfinite(f1))):
        raise FloatingPointError("non-finite derivative in modified Euler step")
    return x + 0.5 * dt * (f0 + f1)


def machine_model(p: MachineParams, jacobians: Literal["fd", "analytic"] = "fd") -> SystemModel:
    """Discrete machine model; inputs are held constant over each step.

    With ``jacobians="fd"`` both Jacobians come from central differences,
    with ``"analytic"`` from the closed forms (used to cross-check).
    """
    dt = p.dt

    def transition(x, u):
        return modified_euler_step(lambda s: machine_derivatives(s, u, p), x, dt)

    def measurement(x, u):
        return machine_measurement(x, u, p)

    if jacobians == "fd":
        def F(x, u):
            return fd_jacobian(lambda s: transition(s, u), x)

        def Hj(x, u):
            return fd_jacobian(lambda s: measurement(s, u), x)
    elif jacobians == "analytic":
        def F(x, u):
            # the derivative is affine in x for fixed u, so Heun's Jacobian is exact
            A = machine_derivative_jacobian(x, u, p)
            return np.eye(4) + dt * A + 0.5 * dt * dt * (A @ A)

        def Hj(x, u):
            return machine_measurement_jacobian(x, u, p)
    else:
        raise ValueError(f"unknown jacobian mode {jacobians!r}")

    return SystemModel(
        state_dim=4,
        input_dim=4,
        meas_dim=2,
        transition=transition,
        measurement=measurement,
        transition_jacobian=F,
        measurement_jacobian=Hj,
        name="machine",
    )


# --------------------------------------------------------------------------
# SMIB truth generator
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SmibNetwork:
    v_bus: float = 1.0
    x_ext: float = 0.65


@dataclass(frozen=True)
class Disturbance:
    """``"tm_step"`` scales T_m by ``1 + magnitude`` from ``t_start`` on;
    ``"bus_dip"`` scales the bus voltage by ``1 - magnitude`` on ``[t_start, t_end)``.
    """

    kind: Literal["none", "tm_step", "bus_dip"] = "none"
    t_start: float = 1.0
    t_end: float = 1.1
    magnitude: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "tm_step", "bus_dip"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")

    def tm_factor(self, t: float) -> float:
        if self.kind == "tm_step" and t >= self.t_start:
            return 1.0 + self.magnitude
        return 1.0

    def bus_factor(self, t: float) -> float:
        if self.kind == "bus_dip" and self.t_start <= t < self.t_end:
            return 1.0 - self.magnitude
        return 1.0


def smib_currents(delta: float, eq_p: float, ed_p: float, v_bus: float,
                  p: MachineParams, net: SmibNetwork) -> tuple[float, float]:
    """Stator currents ``(i_d, i_q)`` for a machine behind ``x_ext`` to an infinite bus."""
    i_d = (eq_p - v_bus * math.cos(delta)) / (p.x_d_prime + net.x_ext)
    i_q = (v_bus * math.sin(delta) - ed_p) / (p.x_q_prime + net.x_ext)
    return i_d, i_q


def smib_equilibrium(p: MachineParams, net: SmibNetwork = SmibNetwork(),
                     p_mech: float = DEFAULT_P_MECH, v_terminal: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Steady operating point delivering ``p_mech`` at terminal magnitude ``v_terminal``.

    Returns ``(state, input)`` with ``dw = 0`` and all derivatives zero.
    """
    s = p_mech * net.x_ext / (v_terminal * net.v_bus)
    if abs(s) >= 1.0:
        raise ValueError("operating point beyond the static transfer limit")
    vt = v_terminal * complex(math.cos(math.asin(s)), s)
    cur = (vt - net.v_bus) / complex(0.0, net.x_ext)
    e_q_axis = vt + complex(0.0, p.x_q) * cur
    delta = math.atan2(e_q_axis.imag, e_q_axis.real)
    rot = complex(math.sin(delta), math.cos(delta))  # e^{-j(delta - pi/2)}
    i_dq, v_dq = cur * rot, vt * rot
    i_d, i_q, v_d, v_q = i_dq.real, i_dq.imag, v_dq.real, v_dq.imag
    eq_p = v_q + p.x_d_prime * i_d
    ed_p = v_d - p.x_q_prime * i_q
    E_fd = eq_p + (p.x_d - p.x_d_prime) * i_d
    return np.array([delta, 0.0, eq_p, ed_p]), np.array([p_mech, E_fd, i_d, i_q])


@dataclass(frozen=True)
class MachineTruth:
    """Decimated truth at the filter rate; row ``k`` is time ``t[k]``.

    ``inputs``/``measurements`` are what the filter sees (noisy);
    ``inputs_true``/``measurements_true`` are noise free.
    """

    t: np.ndarray
    states: np.ndarray
    inputs_true: np.ndarray
    inputs: np.ndarray
    measurements_true: np.ndarray
    measurements: np.ndarray
    metadata: dict = field(default_factory=dict)


def simulate_machine_truth(
    p: MachineParams,
    disturbance: Disturbance = Disturbance(),
    sim_dt: float = 0.001,
    duration: float = 10.0,
    seed: int = 0,
    network: SmibNetwork = SmibNetwork(),
    noise_level: float = NOISE_LEVEL,
    p_mech: float = DEFAULT_P_MECH,
) -> MachineTruth:
    """Integrate the SMIB system with Heun at ``sim_dt`` and decimate to ``p.dt``.

    Noise: independent Gaussian on each phasor component (voltage and
    current) with ``sigma = noise_level * |phasor| / sqrt(2)``, and on
    E_fd and T_m with ``sigma = noise_level * nominal``.
    """
    if duration <= 0 or sim_dt <= 0 or sim_dt > p.dt:
        raise ValueError("need duration > 0 and 0 < sim_dt <= dt")
    ratio = int(round(p.dt / sim_dt))
    if abs(ratio * sim_dt - p.dt) > 1e-9 * p.dt:
        raise ValueError("filter dt must be an integer multiple of sim_dt")
    n_out = int(round(duration / p.dt))

    x_eq, u_eq = smib_equilibrium(p, network, p_mech=p_mech)
    T_m0, E_fd = float(u_eq[0]), float(u_eq[1])
    w0, two_h, kd = p.omega0, 2.0 * p.H_inertia, p.K_D
    xd_diff, xq_diff = p.x_d - p.x_d_prime, p.x_q - p.x_q_prime
    dq_diff = p.x_q_prime - p.x_d_prime

    def deriv(t, s):
        delta, dw, eq_p, ed_p = s
        i_d, i_q = smib_currents(delta, eq_p, ed_p, network.v_bus * disturbance.bus_factor(t), p, network)
        T_m = T_m0 * disturbance.tm_factor(t)
        T_e = ed_p * i_d + eq_p * i_q + dq_diff * i_d * i_q
        return (
            w0 * dw,
            (T_m - T_e - kd * dw) / two_h,
            (E_fd - eq_p - xd_diff * i_d) / p.T_d0_prime,
            (-ed_p + xq_diff * i_q) / p.T_q0_prime,
        )

    def inputs_at(t, s):
        i_d, i_q = smib_currents(s[0], s[2], s[3], network.v_bus * disturbance.bus_factor(t), p, network)
        return (T_m0 * disturbance.tm_factor(t), E_fd, i_d, i_q)

    states = np.empty((n_out + 1, 4))
    inputs_true = np.empty((n_out + 1, 4))
    s = tuple(float(v) for v in x_eq)
    states[0] = s
    inputs_true[0] = inputs_at(0.0, s)
    h = sim_dt
    for k in range(1, n_out + 1):
        for j in range(ratio):
            t = ((k - 1) * ratio + j) * h
            f0 = deriv(t, s)
            sp = tuple(a + h * b for a, b in zip(s, f0))
            f1 = deriv(t + h, sp)
            s = tuple(a + 0.5 * h * (b + c) for a, b, c in zip(s, f0, f1))
        if not all(math.isfinite(v) and abs(v) < 1e6 for v in s):
            raise FloatingPointError(f"SMIB integration blew up near t={k * p.dt:.3f} s")
        states[k] = s
        # currents sampled from the post-event network when an edge lands on a sample instant
        inputs_true[k] = inputs_at(k * p.dt, s)

    meas_true = np.array([machine_measurement(x, u, p) for x, u in zip(states, inputs_true)])

    rng = np.random.default_rng(seed)
    z_sigma = noise_level * np.hypot(meas_true[:, 0], meas_true[:, 1]) / math.sqrt(2.0)
    i_sigma = noise_level * np.hypot(inputs_true[:, 2], inputs_true[:, 3]) / math.sqrt(2.0)
    meas = meas_true + z_sigma[:, None] * rng.standard_normal((n_out + 1, 2))
    inputs = inputs_true.copy()
    inputs[:, 0] += noise_level * T_m0 * rng.standard_normal(n_out + 1)
    inputs[:, 1] += noise_level * E_fd * rng.standard_normal(n_out + 1)
    inputs[:, 2:] += i_sigma[:, None] * rng.standard_normal((n_out + 1, 2))

    return MachineTruth(
        t=np.arange(n_out + 1) * p.dt,
        states=states,
        inputs_true=inputs_true,
        inputs=inputs,
        measurements_true=meas_true,
        measurements=meas,
        metadata={"seed": seed, "sim_dt": sim_dt, "duration": duration, "decimation": ratio},
    )
