import math

import numpy as np
import pytest

from dflx.spectral import GridSpec, ScalarField, VectorField


@pytest.fixture
def grid16():
    return GridSpec.cube(16)


@pytest.fixture
def grid32():
    return GridSpec.cube(32)


def random_scalar(grid, seed=0):
    rng = np.random.default_rng(seed)
    return ScalarField(grid, rng.standard_normal(grid.shape))


def random_vector(grid, seed=0):
    rng = np.random.default_rng(seed)
    return VectorField(grid, rng.standard_normal((3,) + grid.shape))


def rho_oracle(r):
    """Scalar re-implementation of the low-pass profile with plain math."""

    def bump(t):
        return 0.0 if t <= 0 else math.exp(-1.0 / (1.0 - (1.0 - t) ** 2))

    t = min(max((r - 0.75) / (4.0 / 3.0 - 0.75), 0.0), 1.0)
    a, b = bump(1 - t), bump(t)
    return a / (a + b)


def phi_oracle(r, j):
    """Scalar shell multiplier ``rho(r / 2^{j+1}) - rho(r / 2^j)`` (``rho`` itself for ``j = -1``)."""
    if j == -1:
        return rho_oracle(r)
    return rho_oracle(r / 2 ** (j + 1)) - rho_oracle(r / 2 ** j)
