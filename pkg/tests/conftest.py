import numpy as np
import pytest

from vanishpot.algebra import Deformation, SingularityGerm, versal_deformation
from vanishpot.polynomial import Polynomial, parse_polynomial


def r2(n):
    return sum((Polynomial.variable(n, i) ** 2 for i in range(1, n + 1)), Polynomial.constant(n, 0))


@pytest.fixture(scope="session")
def morse3():
    return versal_deformation(SingularityGerm(r2(3)))


@pytest.fixture(scope="session")
def fermat33():
    return versal_deformation(SingularityGerm.parse("x1^3 + x2^3 + x3^3", 3))


def shell(n, radii=(1, 2)):
    """Deformation whose zero set at lam = 0 is the spheres of the given radii."""
    base = Polynomial.constant(n, 1)
    for r in radii:
        base = base * (r2(n) - r * r)
    return Deformation(base=base, basis=((0,) * n,))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


# criterion number -> PASS/FAIL line, filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
