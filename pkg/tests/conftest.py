import numpy as np
import pytest

from hmct.waveform import LatticeParams, make_gaussian_pulse

T = 1e-4
F = 2.5e4
TS = 1e-6
NG = 600
SIGMA = T / (np.sqrt(3) * F)


@pytest.fixture(scope="session")
def lattice():
    return LatticeParams(T, F, 40, 20)


@pytest.fixture(scope="session")
def small_lattice():
    return LatticeParams(T, F, 4, 4)


@pytest.fixture(scope="session")
def pulse():
    return make_gaussian_pulse(SIGMA, NG, TS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
