import numpy as np
import pytest

from miocrl.drive_cycle import DriveCycle

ACCEPTANCE = {}


def record(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


@pytest.fixture
def accept():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def zero_cycle():
    return DriveCycle("zero", 1.0, [0.0] * 11)


@pytest.fixture
def ramp_cycle():
    v = [0.0, 1.0, 2.5, 4.0, 5.5, 6.5, 7.0, 7.0, 6.0, 4.0, 2.0, 0.0]
    return DriveCycle("ramp", 1.0, v)
