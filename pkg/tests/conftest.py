import numpy as np
import pytest

from negimag.battery import InputBattery
from negimag.signal import Signal


@pytest.fixture(scope="session")
def battery():
    return InputBattery()


@pytest.fixture(scope="session")
def small_battery():
    return InputBattery(seed=7, count=10, horizon=40.0)


def exp_signal(dt=1e-3, horizon=20.0, rate=1.0):
    return Signal.from_function(lambda t: np.exp(-rate * t), dt, horizon)


# criterion number -> one-line PASS/FAIL summary, filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
