import numpy as np
import pytest

from torus_holonomy.classical import HamiltonianPoly
from torus_holonomy.geometry import (
    ConnectionSpec,
    ConnectionTerm,
    Line,
    ParameterPath,
    Polynomial,
    SmoothstepLine,
)

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def term(k, alpha, amp, harmonic, kind, d=1):
    """Zero-based term with a constant amplitude polynomial in d variables."""
    poly = amp if isinstance(amp, Polynomial) else Polynomial.constant(amp, d)
    return ConnectionTerm(k, alpha, poly, harmonic, kind)


def sigma_poly(c, alpha=0, d=1):
    """c * sigma^alpha."""
    powers = [0] * d
    powers[alpha] = 1
    return Polynomial(d, ((c, tuple(powers)),))


@pytest.fixture
def cos_spec():
    """Lambda^1_1 = 0.3 cos(phi)."""
    return ConnectionSpec(1, 1, (term(0, 0, 0.3, (1,), "cos"),))


@pytest.fixture
def unit_line():
    """xi(t) = t on [0, 1]."""
    return ParameterPath((Line([0.0], [1.0], 1.0),))


@pytest.fixture
def smooth_path():
    return ParameterPath((SmoothstepLine([0.0], [1.0], 1.0),))


@pytest.fixture
def kinetic():
    return HamiltonianPoly.kinetic(1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
