import numpy as np
import pytest

from ratprop import specelem as se


@pytest.fixture(scope="session")
def mesh6():
    return se.build_mesh(6, 6, 16)


@pytest.fixture(scope="session")
def mesh4():
    return se.build_mesh(4, 4, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for n, m in sys.modules.items() if n.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
