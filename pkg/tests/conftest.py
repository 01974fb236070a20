import pytest

from siltlab.variational import solve_kappa_ode
from siltlab.walk import preset


@pytest.fixture(scope="session")
def lazy():
    return preset("lazy")


@pytest.fixture(scope="session")
def simple():
    return preset("simple")


@pytest.fixture(scope="session")
def kappa():
    return solve_kappa_ode().kappa


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 13):
        terminalreporter.write_line(mod.RESULTS.get(k, f"[FAIL] criterion {k:2d}: did not run to completion"))
