import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from logconvex.errors import ConfigurationError
from logconvex.grids import Grid1D, TorusGrid
from logconvex.noise import (
    NoiseSpec,
    build_basis,
    eval_wiener,
    ito_correction,
    sample_brownian,
    uniform_time_grid,
    wiener_values,
    zero_field,
)
from logconvex.rng import derive_seed, standard_normals

from conftest import frozen_field


class TestBasis:
    def test_first_mode_is_normalised_sine(self):
        g = Grid1D(64)
        b = build_basis(g, 1)
        np.testing.assert_allclose(b.values[0], np.sqrt(2 / np.pi) * np.sin(g.nodes), rtol=0, atol=1e-15)
        assert abs(g.inner(b.values[0], b.values[0]) - 1.0) < 1e-12

    def test_first_two_modes_orthogonal(self):
        b = build_basis(Grid1D(64), 2)
        assert abs(b.gram()[0, 1]) < 1e-12

    def test_gram_against_quadrature_oracle(self):
        g = Grid1D(256)
        b = build_basis(g, 3)
        exact = np.array(
            [[integrate.quad(lambda x: 2 / np.pi * np.sin(i * x) * np.sin(j * x), 0, np.pi)[0] for j in (1, 2, 3)] for i in (1, 2, 3)]
        )
        np.testing.assert_allclose(exact, np.eye(3), atol=1e-12)
        assert np.max(np.abs(b.gram() - exact)) <= 1e-3

    @pytest.mark.parametrize("n,J", [(32, 8), (128, 16), (256, 30)])
    def test_orthonormality_bound(self, n, J):
        g = Grid1D(n)
        assert build_basis(g, J).orthonormality_error() <= 10 * g.h**2

    def test_torus_basis_orthonormal(self):
        b = build_basis(TorusGrid(16), 8)
        assert b.orthonormality_error() < 1e-12

    def test_dirichlet_boundary(self):
        g = Grid1D(32)
        j = np.arange(1, 5)[:, None]
        ends = np.sqrt(2 / np.pi) * np.sin(j * np.array([0.0, np.pi]))
        assert np.max(np.abs(ends)) < 1e-15

    def test_coarse_grid_rejected(self):
        with pytest.raises(ConfigurationError):
            build_basis(Grid1D(16), 5)
        with pytest.raises(ConfigurationError):
            build_basis(TorusGrid(4), 30)

    def test_summability_nondecreasing_in_J(self):
        g = Grid1D(128)
        vals = [NoiseSpec.power_law(J, 0.3).summability(build_basis(g, J)) for J in range(1, 9)]
        assert np.all(np.diff(vals) >= 0)


class TestBrownian:
    def test_starts_at_zero(self):
        b = build_basis(Grid1D(32), 3)
        f = sample_brownian(b, NoiseSpec.power_law(3, 1.0), [0.0], 5)
        assert np.all(f.beta[0] == 0)

    def test_increment_variance(self):
        b = build_basis(Grid1D(32), 1)
        f = sample_brownian(b, NoiseSpec.power_law(1, 1.0), uniform_time_grid(10.0, 1e-3), 11)
        var = np.var(np.diff(f.beta[:, 0]), ddof=1)
        assert 0.8e-3 <= var <= 1.2e-3

    def test_reproducible(self):
        b = build_basis(Grid1D(32), 4)
        spec = NoiseSpec.power_law(4, 0.2)
        t = uniform_time_grid(1.0, 1e-2)
        assert np.array_equal(sample_brownian(b, spec, t, 3).beta, sample_brownian(b, spec, t, 3).beta)

    def test_paths_independent_of_mode_count(self):
        g = Grid1D(64)
        t = uniform_time_grid(1.0, 1e-2)
        small = sample_brownian(build_basis(g, 2), NoiseSpec.power_law(2, 1.0), t, 9)
        big = sample_brownian(build_basis(g, 6), NoiseSpec.power_law(6, 1.0), t, 9)
        assert np.array_equal(small.beta, big.beta[:, :2])

    def test_non_monotone_grid_rejected(self):
        b = build_basis(Grid1D(32), 1)
        with pytest.raises(ConfigurationError):
            sample_brownian(b, NoiseSpec.power_law(1, 1.0), [0.0, 0.2, 0.1], 0)

    def test_stream_keys_are_distinct(self):
        assert not np.array_equal(standard_normals(1, 1, 8), standard_normals(1, 2, 8))
        assert derive_seed(0, 0, 1) != derive_seed(0, 1, 0)
        assert derive_seed(4, 2, 7) == derive_seed(4, 2, 7)


class TestEvalWiener:
    def test_zero_path(self):
        g = Grid1D(32)
        f = zero_field(build_basis(g, 2), NoiseSpec.power_law(2, 1.0), uniform_time_grid(1.0, 0.5))
        W, dW, _ = eval_wiener(f, 0.5)
        assert not W.any() and not dW.any()

    def test_substitution(self):
        g = Grid1D(64)
        f = frozen_field(g, [3.0])
        f = f.__class__(f.times, f.beta, f.basis, NoiseSpec((2.0,)), 0)
        W, _, d2W = eval_wiener(f, 1.0)
        np.testing.assert_allclose(W, 6 * np.sqrt(2 / np.pi) * np.sin(g.nodes), atol=1e-14)
        np.testing.assert_allclose(d2W, -W, atol=1e-14)

    def test_off_grid_time_refused(self):
        g = Grid1D(32)
        f = frozen_field(g, [1.0])
        with pytest.raises(ConfigurationError):
            eval_wiener(f, 0.3)

    def test_analytic_hessian_matches_finite_differences(self):
        g = Grid1D(256)
        f = frozen_field(g, [0.5, -0.3, 0.2])
        W, _, d2W = eval_wiener(f, m=0)
        full = np.concatenate([[0.0], W, [0.0]])
        fd = (full[2:] - 2 * full[1:-1] + full[:-2]) / g.h**2
        assert np.max(np.abs(fd - d2W)) < 5 * g.h**2 * 9

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.1, 4.0))
    def test_scaling(self, s):
        g = Grid1D(32)
        f = frozen_field(g, [0.4, -0.7])
        f = f.__class__(f.times, f.beta, f.basis, NoiseSpec((0.3, 0.2)), 0)
        W = wiener_values(f)
        np.testing.assert_allclose(wiener_values(f.scaled(s)), s * W, rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(ito_correction(f.basis, f.spec.scaled(s)), s**2 * ito_correction(f.basis, f.spec), rtol=1e-13)


class TestItoCorrection:
    def test_zero(self):
        b = build_basis(Grid1D(32), 3)
        assert not ito_correction(b, NoiseSpec((0.0, 0.0, 0.0))).any()

    def test_single_mode(self):
        g = Grid1D(64)
        sigma = 0.7
        mu = ito_correction(build_basis(g, 1), NoiseSpec.power_law(1, sigma))
        np.testing.assert_allclose(mu, sigma**2 * np.sin(g.nodes) ** 2 / np.pi, atol=1e-15)

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=6))
    def test_nonnegative(self, mus):
        b = build_basis(Grid1D(32), len(mus))
        assert ito_correction(b, NoiseSpec(tuple(mus))).min() >= 0

    def test_mode_mismatch(self):
        with pytest.raises(ConfigurationError):
            ito_correction(build_basis(Grid1D(32), 2), NoiseSpec.power_law(3, 1.0))
