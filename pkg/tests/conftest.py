import numpy as np
import pytest

from adaptmcmc import target as tgt


@pytest.fixture
def std1d():
    return tgt.gaussian([0.0], [[1.0]])


@pytest.fixture
def gauss2d():
    return tgt.gaussian([1.0, -1.0], [[2.0, 0.8], [0.8, 1.0]])


@pytest.fixture
def pm2_mixture():
    """Equal mixture of N(-2, 1) and N(2, 1)."""
    return tgt.gaussian_mixture([0.5, 0.5], [-2.0, 2.0], [1.0, 1.0])


@pytest.fixture
def em_target():
    return tgt.gaussian_mixture([0.5, 0.5], [-2.0, 2.0], [0.8, 1.2])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_spd(rng, d, jitter=1e-6):
    b = rng.standard_normal((d, d))
    return b @ b.T + jitter * np.eye(d)


def phi(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
