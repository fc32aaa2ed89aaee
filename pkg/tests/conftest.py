import numpy as np
import pytest

from recmix.kernels import SamplingModel
from recmix.measure import atoms_measure, make_measure, normalize
from recmix.simgen import scenario


class ConstantKernel(SamplingModel):
    """p(x | theta) = c for every theta; not a density in x, only for tests."""

    name = "constant"

    def __init__(self, c=0.7):
        self.c = c

    def log_density(self, x, theta):
        return np.broadcast_to(np.log(self.c), np.broadcast(np.asarray(x), np.asarray(theta)).shape).copy()

    def draw(self, theta, rng):
        return rng.random(np.shape(theta))


@pytest.fixture
def const_kernel():
    return ConstantKernel()


@pytest.fixture
def two_atoms():
    return atoms_measure([0.0, 1.0])


@pytest.fixture
def two_atom_uniform(two_atoms):
    return normalize(np.ones(2), two_atoms)


@pytest.fixture(scope="session")
def bn_small():
    """BN setup on a coarser grid, for fast unit tests."""
    sc = scenario("BN", m=200)
    meas = sc.measure()
    return sc, meas, sc.model(), sc.f0(meas)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density(rng, measure):
    return normalize(rng.random(measure.size) + 1e-3, measure)


@pytest.fixture
def unit_grid():
    return make_measure(0.0, 1.0, 101)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
