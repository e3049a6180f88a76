import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from akf import models
from akf.numerics import fd_jacobian
from akf.models import (
    Disturbance,
    LinearModelParams,
    MachineParams,
    electrical_torque,
    linear_model,
    machine_derivative_jacobian,
    machine_derivatives,
    machine_measurement,
    machine_measurement_jacobian,
    machine_model,
    modified_euler_step,
    simulate_linear_truth,
    simulate_machine_truth,
    smib_currents,
    smib_equilibrium,
)


def test_linear_model_matrices(lin_params):
    np.testing.assert_array_equal(lin_params.A, [[1.0, 1.0], [0.0, 1.0]])
    np.testing.assert_allclose(lin_params.Q_true, [[0.01 / 3, 0.005], [0.005, 0.01]], rtol=1e-15)
    np.testing.assert_array_equal(lin_params.R_true, [[0.1]])


def test_linear_model_maps(lin_model):
    np.testing.assert_array_equal(lin_model.transition(np.array([0.0, 1.0]), ()), [1.0, 1.0])
    assert lin_model.measurement(np.array([3.2, -5.0]), ())[0] == 3.2
    np.testing.assert_array_equal(lin_model.measurement_jacobian(np.zeros(2), ()), [[1.0, 0.0]])


def test_linear_params_validation():
    with pytest.raises(ValueError):
        LinearModelParams(dt=0.0)
    with pytest.raises(ValueError):
        LinearModelParams(q0=-1.0)


def test_noiseless_truth_is_a_ramp():
    tr = simulate_linear_truth(LinearModelParams(q0=0.0, r0=0.0), 6, seed=0, x0=[0.0, 1.0])
    np.testing.assert_array_equal(tr.states[:, 0], np.arange(7.0))
    np.testing.assert_array_equal(tr.measurements[:, 0], np.arange(1.0, 7.0))


def test_linear_truth_default_start_and_determinism(lin_params):
    a = simulate_linear_truth(lin_params, 50, seed=8)
    b = simulate_linear_truth(lin_params, 50, seed=8)
    np.testing.assert_array_equal(a.states[0], [0.0, 0.0])
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.measurements, b.measurements)
    assert not np.array_equal(a.measurements, simulate_linear_truth(lin_params, 50, seed=9).measurements)


def test_linear_measurement_noise_variance(lin_params):
    tr = simulate_linear_truth(lin_params, 100_000, seed=1)
    v = tr.measurements[:, 0] - tr.states[1:, 0]
    assert np.var(v) == pytest.approx(lin_params.r0, rel=0.03)


def test_linear_process_noise_covariance(lin_params):
    tr = simulate_linear_truth(lin_params, 100_000, seed=2)
    w = tr.states[1:] - tr.states[:-1] @ lin_params.A.T
    np.testing.assert_allclose(np.cov(w.T), lin_params.Q_true, rtol=0.05)


# ---- machine -------------------------------------------------------------


def test_equilibrium_derivatives_vanish(mach_params, equilibrium):
    x, u = equilibrium
    np.testing.assert_allclose(machine_derivatives(x, u, mach_params), 0.0, atol=1e-14)


def test_equilibrium_operating_point(mach_params, equilibrium):
    x, u = equilibrium
    v = machine_measurement(x, u, mach_params)
    assert math.hypot(*v) == pytest.approx(1.0, abs=1e-12)
    assert electrical_torque(x[2], x[3], u[2], u[3], mach_params) == pytest.approx(models.DEFAULT_P_MECH, abs=1e-12)
    i_d, i_q = smib_currents(x[0], x[2], x[3], 1.0, mach_params, models.SmibNetwork())
    np.testing.assert_allclose([i_d, i_q], u[2:], atol=1e-12)


def test_rotor_angle_rate(mach_params):
    f = machine_derivatives([0.0, 1e-3, 1.0, 0.0], [0.0, 1.0, 0.0, 0.0], mach_params)
    assert f[0] == pytest.approx(0.376991, rel=1e-6)


def test_damping_term():
    p = MachineParams(K_D=10.0)
    # zero currents make T_e = 0, so T_m = 0 balances it
    f = machine_derivatives([0.3, 0.01, 1.0, 0.2], [0.0, 1.0, 0.0, 0.0], p)
    assert f[1] == pytest.approx(-10 * 0.01 / 13, rel=1e-12)


def test_measurement_rotation_examples(mach_params):
    x = np.array([0.0, 0.0, 1.1, 0.3])
    np.testing.assert_allclose(machine_measurement(x, np.zeros(4), mach_params), [1.1, -0.3], atol=1e-15)
    x[0] = math.pi / 2
    np.testing.assert_allclose(machine_measurement(x, np.zeros(4), mach_params), [0.3, 1.1], atol=1e-15)


@given(st.floats(-10, 10))
def test_measurement_norm_independent_of_angle(delta):
    p = MachineParams()
    x = np.array([delta, 0.0, 0.9, 0.4])
    u = np.array([0.8, 2.0, 0.6, 0.35])
    v_d = x[3] + p.x_q_prime * u[3]
    v_q = x[2] - p.x_d_prime * u[2]
    assert math.hypot(*machine_measurement(x, u, p)) == pytest.approx(math.hypot(v_d, v_q), abs=1e-12)


def test_measurement_jacobian_delta_column(mach_params):
    x = np.array([0.0, 0.0, 1.1, 0.3])
    J = machine_measurement_jacobian(x, np.zeros(4), mach_params)
    np.testing.assert_allclose(J[:, 0], [x[3], x[2]], atol=1e-15)


def test_heun_hand_value():
    assert modified_euler_step(lambda x: -x, np.array([1.0]), 0.1)[0] == pytest.approx(0.905, abs=1e-15)


@pytest.mark.parametrize("deriv, dt", [(lambda x: np.zeros_like(x), 0.5), (lambda x: -x, 0.0)])
def test_heun_fixed_points(deriv, dt):
    x = np.array([1.5, -2.0])
    np.testing.assert_array_equal(modified_euler_step(deriv, x, dt), x)


def test_heun_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        modified_euler_step(lambda x: x * np.inf, np.array([1.0]), 0.1)


def test_heun_is_second_order():
    def err(dt):
        x = np.array([1.0])
        for _ in range(round(1 / dt)):
            x = modified_euler_step(lambda s: -s, x, dt)
        return abs(x[0] - math.exp(-1))

    assert 3.5 <= err(0.01) / err(0.005) <= 4.5


def _random_points(n=100, seed=0):
    r = np.random.default_rng(seed)
    for _ in range(n):
        x = np.array([r.uniform(-3, 3), r.uniform(-0.05, 0.05), r.uniform(0.5, 1.5), r.uniform(-0.5, 0.5)])
        u = np.array([r.uniform(0.2, 1.0), r.uniform(1, 3), r.uniform(-1, 1), r.uniform(-1, 1)])
        yield x, u


def test_machine_jacobians_match_fd(mach_params):
    m = machine_model(mach_params, "analytic")
    for x, u in _random_points():
        np.testing.assert_allclose(m.transition_jacobian(x, u),
                                   fd_jacobian(lambda s: m.transition(s, u), x), rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(m.measurement_jacobian(x, u),
                                   fd_jacobian(lambda s: m.measurement(s, u), x), rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(machine_derivative_jacobian(x, u, mach_params),
                                   fd_jacobian(lambda s: machine_derivatives(s, u, mach_params), x),
                                   rtol=1e-5, atol=1e-8)


def test_transition_jacobian_first_order(mach_params, equilibrium):
    x, u = equilibrium
    F = machine_model(mach_params, "fd").transition_jacobian(x, u)
    A = machine_derivative_jacobian(x, u, mach_params)
    dt = mach_params.dt
    # the dt^2 term is what separates the two
    np.testing.assert_allclose(F, np.eye(4) + dt * A, atol=dt**2 * np.abs(A @ A).max())


def test_unknown_jacobian_mode(mach_params):
    with pytest.raises(ValueError):
        machine_model(mach_params, "symbolic")


def test_machine_params_validation():
    with pytest.raises(ValueError):
        MachineParams(x_d=0.2)
    with pytest.raises(ValueError):
        MachineParams(K_D=-1.0)


def test_undisturbed_machine_stays_put(mach_params):
    tr = simulate_machine_truth(mach_params, Disturbance(), duration=10.0, seed=1)
    np.testing.assert_allclose(tr.states, np.broadcast_to(tr.states[0], tr.states.shape), rtol=0, atol=1e-9)


def test_torque_step_settles():
    p = MachineParams()
    tr = simulate_machine_truth(p, Disturbance("tm_step", 1.0, 1.1, 0.1), duration=120.0, noise_level=0.0)
    tail = tr.states[-100:]
    assert np.abs(tail[:, 1]).max() < 1e-4
    assert np.ptp(tail[:, 0]) < 1e-4
    # more torque, larger angle; E_fd is held, so this is not the |V_t| = 1 point
    assert tail[-1, 0] > tr.states[0, 0] + 0.05
    T_e = electrical_torque(tail[-1, 2], tail[-1, 3], *tr.inputs_true[-1, 2:], p)
    assert T_e == pytest.approx(1.1 * tr.inputs_true[0, 0], abs=1e-4)


def test_bus_dip_excites_dynamics(mach_params):
    tr = simulate_machine_truth(mach_params, Disturbance("bus_dip", 1.0, 1.1, 0.5), duration=4.0, noise_level=0.0)
    assert np.abs(tr.states[:, 1]).max() > 1e-3
    assert np.isfinite(tr.states).all()


def test_machine_truth_reproducible(mach_params):
    d = Disturbance("bus_dip", 1.0, 1.1, 0.5)
    a = simulate_machine_truth(mach_params, d, duration=2.0, seed=5)
    b = simulate_machine_truth(mach_params, d, duration=2.0, seed=5)
    for f in ("states", "inputs", "measurements"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert a.states.shape == (51, 4) and a.t[-1] == pytest.approx(2.0)


def test_phasor_noise_level(mach_params):
    tr = simulate_machine_truth(mach_params, Disturbance(), duration=400.0, seed=3)
    mag = np.hypot(*tr.measurements_true.T)
    err = (tr.measurements - tr.measurements_true) / mag[:, None]
    assert err.shape[0] >= 10_000
    tve = np.sqrt(np.mean(np.sum(err**2, axis=1)))
    assert tve == pytest.approx(0.04, rel=0.05)
    np.testing.assert_allclose(err.std(axis=0), 0.04 / math.sqrt(2), rtol=0.05)
    tm_rel = (tr.inputs[:, 0] - tr.inputs_true[:, 0]) / tr.inputs_true[:, 0]
    assert tm_rel.std() == pytest.approx(0.04, rel=0.05)


def test_simulator_argument_checks(mach_params):
    with pytest.raises(ValueError):
        simulate_machine_truth(mach_params, sim_dt=0.1)
    with pytest.raises(ValueError):
        simulate_machine_truth(mach_params, sim_dt=0.0007)
    with pytest.raises(ValueError):
        Disturbance("fault")
