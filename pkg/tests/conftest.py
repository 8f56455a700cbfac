import numpy as np
import pytest

from nsaudit.grid import Grid, random_solenoidal


@pytest.fixture
def grid16():
    return Grid(16)


@pytest.fixture
def grid32():
    return Grid(32)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


@pytest.fixture
def field32(grid32):
    return random_solenoidal(grid32, 4, 3, 1.0)


# one verdict line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    def record(number, ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 11):
        ok, detail = ACCEPTANCE.get(number, (False, "not run"))
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
