import sys

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_state(rng, L, batch=()):
    return rng.standard_normal(batch + (L,)) + 1j * rng.standard_normal(batch + (L,))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    RESULTS = getattr(mod, "RESULTS", None)
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        passed, line = RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {n:2d}: {line}")
