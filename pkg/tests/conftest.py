import numpy as np
import pytest

from parnoise.model import NoiseSpec, ParSpec


@pytest.fixture
def spec_t2():
    """T=2, p=1 model with phi(1)=0.4, phi(2)=-0.6 and unit innovation variance."""
    return ParSpec([[0.4], [-0.6]], 1.0)


@pytest.fixture
def gamma_t2():
    # spec_t2 with sigma_Z^2 = 1, by hand:
    # gamma(1,1) = 1 + (1 + 0.4^2), gamma(2,2) = 1 + (1 + 0.6^2), gamma(1,2) = -phi(2) = 0.6
    return np.array([[2.16, 0.6], [0.6, 2.36]])


@pytest.fixture
def mixture_noise():
    return NoiseSpec.mixture((0.5, 0.5), (0.5, 1.5))


def random_spec(rng, T=None, p=None):
    T = int(rng.integers(2, 6)) if T is None else T
    p = int(rng.integers(1, T)) if p is None else p
    return ParSpec(rng.uniform(-0.9, 0.9, size=(T, p)), float(rng.uniform(0.3, 2.0)))


# One line per acceptance criterion, echoed in the terminal summary so the
# verdicts are visible even when test output is captured.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
