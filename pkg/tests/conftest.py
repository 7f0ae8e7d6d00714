import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def seq_map(n=4):
    """A 1 x n x n map holding 1..n*n row-major."""
    return np.arange(1, n * n + 1, dtype=np.float64).reshape(1, n, n)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is not None and module.REPORT:
        terminalreporter.section("acceptance")
        for line in module.REPORT:
            terminalreporter.write_line(line)
