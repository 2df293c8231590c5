import numpy as np
import pytest

from stochdg.problems import build_problem


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def pend():
    return build_problem("pendulum")


@pytest.fixture(scope="session")
def lv():
    return build_problem("lotka_volterra")


@pytest.fixture(scope="session")
def quartic():
    return build_problem("quartic")


@pytest.fixture(scope="session")
def quadratic():
    return build_problem("quadratic")


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
