import numpy as np
import pytest

from specreg.mercer import min_kernel, min_kernel_eigensystem, sobolev_h1_kernel


@pytest.fixture(scope="session")
def min_es():
    return min_kernel_eigensystem()


@pytest.fixture(scope="session")
def kmin():
    return min_kernel()


@pytest.fixture(scope="session")
def kh1():
    return sobolev_h1_kernel()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def record_criterion():
    """Store one summary line per acceptance criterion for the terminal report."""

    def record(key: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[key] = f"{'PASS' if passed else 'FAIL'}  criterion {key}: {detail}"
        print(ACCEPTANCE_LINES[key])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
