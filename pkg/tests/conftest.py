import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from emlmc import fem
from emlmc.mesh import build_single

settings.register_profile("emlmc", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("emlmc")

SQRT2 = np.sqrt(2.0)


@pytest.fixture(scope="session")
def p2_4():
    return fem.FeSpace(build_single(SQRT2 / 4), 2)


@pytest.fixture(scope="session")
def p2_8():
    return fem.FeSpace(build_single(SQRT2 / 8), 2)


@pytest.fixture(scope="session")
def p1_4():
    return fem.FeSpace(build_single(SQRT2 / 4), 1)


ACCEPTANCE = {}


def record(criterion, passed, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE[criterion] = (bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
