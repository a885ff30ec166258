import numpy as np
import pytest

import daecbf  # noqa: F401  (enables float64 before any jax use)
from daecbf.benchmarks import get_preset

ACCEPTANCE_RESULTS: dict = {}


def record(criterion: str, passed: bool, detail: str):
    ACCEPTANCE_RESULTS[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k[1:])):
        passed, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{key} {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def wind():
    return get_preset("wind_turbine")


@pytest.fixture(scope="session")
def manip():
    return get_preset("manipulator")


@pytest.fixture(scope="session")
def wind_pd(wind):
    return wind.projected()


@pytest.fixture(scope="session")
def manip_pd(manip):
    return manip.projected()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
