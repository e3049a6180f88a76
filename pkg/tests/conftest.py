import numpy as np
import pytest

from akf import models


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def lin_params():
    return models.LinearModelParams()


@pytest.fixture
def lin_model(lin_params):
    return models.linear_model(lin_params)


@pytest.fixture
def mach_params():
    return models.MachineParams()


@pytest.fixture(scope="session")
def equilibrium():
    return models.smib_equilibrium(models.MachineParams())


def scalar_model():
    """x_k = x_{k-1}, z_k = x_k; handy for hand-checked corrections."""
    from akf.filter import SystemModel

    return SystemModel(
        state_dim=1,
        input_dim=0,
        meas_dim=1,
        transition=lambda x, u: x.copy(),
        measurement=lambda x, u: x.copy(),
        transition_jacobian=lambda x, u: np.eye(1),
        measurement_jacobian=lambda x, u: np.eye(1),
        name="scalar",
    )


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Criterion number -> (passed, detail), printed after the run."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE_KEY, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        ok, detail = log[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
