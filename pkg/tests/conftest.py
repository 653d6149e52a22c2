import numpy as np
import pytest

from srlwlab.spectral_core import TorusState

ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def smooth_target(N):
    k = np.arange(-N, N + 1)
    return TorusState(N, (1.0 + k**2) ** -2.0, np.zeros(2 * N + 1))


def random_state(N, rng, decay=2.0, zero_v_mean=True):
    s = TorusState.random(N, rng, decay)
    if zero_v_mean:
        s.v[N] = 0.0
    return s
