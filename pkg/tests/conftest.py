import math

import pytest

from rtglue.spectra import twisted_torus_spectrum

FOUR_PI2 = 4 * math.pi ** 2


@pytest.fixture(scope="session")
def torus():
    """Unit torus, twist (1/2, 1/2), cutoff 40 * 4 pi^2."""
    return twisted_torus_spectrum(1.0, 1.0, 0.5, 0.5, 40 * FOUR_PI2)


@pytest.fixture(scope="session")
def torus_small():
    return twisted_torus_spectrum(1.0, 1.0, 0.5, 0.5, 10 * FOUR_PI2)


@pytest.fixture(scope="session")
def torus_skew():
    return twisted_torus_spectrum(1.3, 0.8, 0.25, 0.6, 40 * FOUR_PI2)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
