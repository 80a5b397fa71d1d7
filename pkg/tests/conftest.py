import sys

import numpy as np
import pytest

from fubini_sde import Grids, generate_epi_brownian


@pytest.fixture(scope="session")
def small_noise():
    """N=32, M=500, K=64 on [0, 1]; shared by read-only tests."""
    return generate_epi_brownian(Grids.make(1.0, 64, 32), 500, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
