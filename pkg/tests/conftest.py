import numpy as np
import pytest

from logconvex.grids import Grid1D
from logconvex.noise import NoiseSpec, build_basis, sample_brownian, uniform_time_grid, zero_field


@pytest.fixture
def grid64():
    return Grid1D(64)


def make_field(grid, J=1, sigma=0.0, T=1.0, dt=1e-3, seed=0, decay_p=2.0):
    """Wiener field on ``grid``; zero paths when ``sigma == 0``."""
    basis = build_basis(grid, J)
    spec = NoiseSpec.power_law(J, sigma, decay_p)
    times = uniform_time_grid(T, dt)
    if sigma == 0:
        return zero_field(basis, spec, times)
    return sample_brownian(basis, spec, times, seed)


def frozen_field(grid, coeffs, T=1.0, dt=0.5):
    """Field with ``W(t) = sum_j coeffs[j] e_j`` at every node (mu_j = 1)."""
    coeffs = np.asarray(coeffs, dtype=float)
    basis = build_basis(grid, coeffs.size)
    spec = NoiseSpec(tuple([1.0] * coeffs.size))
    times = uniform_time_grid(T, dt)
    return zero_field(basis, spec, times).with_beta(np.tile(coeffs, (times.size, 1)))
