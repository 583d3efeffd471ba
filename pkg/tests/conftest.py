import numpy as np
import pytest

from adlab import evolve, models, spectral
from adlab.grid import uniform_grid

OMEGA0 = 1.0
T_REF = 200 * np.pi


class DualPair:
    def __init__(self, base, T, points, substeps):
        self.T = T
        self.grid = uniform_grid(points)
        self.Ha = base
        self.Ua = evolve.propagator(base, T, self.grid, substeps)
        self.Hb = models.build_dual(base, T, self.grid, self.Ua)
        self.Ub = self.Hb.propagator
        self.path_a = spectral.parallel_path(base, T, self.grid)
        self.path_b = spectral.parallel_path(self.Hb, T, self.grid)


@pytest.fixture(scope="session")
def rotating():
    return models.rotating_spin(models.RotatingSpinParams(OMEGA0, T_REF))


@pytest.fixture(scope="session")
def ref_pair(rotating):
    """Rotating spin and its dual at T = 200 pi on 8192 points."""
    return DualPair(rotating, T_REF, 8192, 64)


@pytest.fixture(scope="session")
def ref_pair_odd(rotating):
    """Same pair on 8193 points (s = 0.5 lies on the grid)."""
    return DualPair(rotating, T_REF, 8193, 64)


@pytest.fixture(scope="session")
def constant_H():
    return models.constant(0.5 * models.SIGMA_Z)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
