import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logconvex.errors import ConfigurationError
from logconvex.tamednse import (
    FourierVelocity,
    NSEParams,
    SpectralGrid,
    check_theorem3,
    default_initial_pair,
    galerkin_step,
    gamma_of_t,
    interpolation_probe,
    leray_project,
    nonlinear_term,
    phi_eps,
    random_field,
    simulate,
    single_mode,
    taming_g,
    taming_g_prime,
    taylor_green,
    trilinear_b,
    w14_sq,
)
from logconvex.tamednse.integrator import brownian_increments
from oracles import convolution_oracle
from logconvex.tamednse.spectral import divergence_error, h1_sq, hermitian_error, inner, l2_sq, refine


@pytest.fixture(scope="module")
def g4():
    return SpectralGrid(4)


class TestTaming:
    def test_values(self):
        N, nu = 10.0, 0.5
        assert taming_g(N / 2, N, nu) == 0.0
        assert taming_g(N + 1, N, nu) == pytest.approx(1 / (2 * nu))
        assert taming_g(N + 3, N, nu) == pytest.approx(2 / nu + 1 / (2 * nu))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1, 50), st.floats(0.05, 5))
    def test_c1_monotone(self, N, nu):
        r = np.linspace(0, N + 5, 2001)
        gv, dg = taming_g(r, N, nu), taming_g_prime(r, N, nu)
        assert np.all(np.diff(gv) >= 0)
        assert np.all((dg >= 0) & (dg <= 1 / nu + 1e-15))
        mid = 0.5 * (r[1:] + r[:-1])
        smooth = ~(((r[:-1] < N) & (r[1:] > N)) | ((r[:-1] < N + 1) & (r[1:] > N + 1)))
        secant = np.diff(gv) / np.diff(r)
        np.testing.assert_allclose(secant[smooth], taming_g_prime(mid, N, nu)[smooth], atol=1e-9 / nu)

    def test_domain(self):
        with pytest.raises(ConfigurationError):
            taming_g(-1.0, 10, 1)
        with pytest.raises(ConfigurationError):
            taming_g(1.0, 0.5, 1)


class TestSpectral:
    def test_round_trip(self, g4):
        c = random_field(g4, np.random.default_rng(0), 1.5)
        assert np.max(np.abs(g4.to_spectral(g4.to_physical(c)) - c)) < 1e-14
        assert hermitian_error(c) < 1e-14

    def test_parseval(self, g4):
        c = random_field(g4, np.random.default_rng(1), 1.5, 2.0)
        u = g4.to_physical(c)
        assert abs(np.mean(np.sum(u * u, axis=0)) - l2_sq(c)) < 1e-12
        assert abs(l2_sq(c) - 4.0) < 1e-12

    def test_single_mode_field(self, g4):
        c = single_mode(g4, (1, 2, 0), 0.3, (0, 0, 1))
        x, y, z = g4.coords
        u = g4.to_physical(c)
        np.testing.assert_allclose(u[2], 0.6 * np.cos(x + 2 * y), atol=1e-14)
        assert divergence_error(g4, c) == 0.0

    def test_velocity_wrapper(self, g4):
        v = FourierVelocity.from_physical(g4, g4.to_physical(taylor_green(g4)))
        assert v.divergence_error < 1e-14 and v.hermitian_error < 1e-14
        assert abs(v.l2_sq - 1 / 4) < 1e-14


class TestLeray:
    def test_longitudinal_removed(self, g4):
        c = g4.zeros()
        K = g4.K
        c[:, K + 1, K, K] = [1, 2, 3]
        out = leray_project(g4, c)
        np.testing.assert_allclose(out[:, K + 1, K, K], [0, 2, 3])

    def test_idempotent_and_divergence_free(self, g4):
        gen = np.random.default_rng(2)
        c = gen.standard_normal(g4.shape) + 1j * gen.standard_normal(g4.shape)
        p = leray_project(g4, c)
        assert np.max(np.abs(leray_project(g4, p) - p)) < 1e-15
        assert np.max(np.abs(np.sum(g4.kvec * p, axis=0))) < 1e-14

    def test_self_adjoint(self, g4):
        gen = np.random.default_rng(3)
        a, b = (gen.standard_normal(g4.shape) + 1j * gen.standard_normal(g4.shape) for _ in range(2))
        lhs = np.vdot(leray_project(g4, a), b)
        rhs = np.vdot(a, leray_project(g4, b))
        assert abs(lhs - rhs) < 1e-12 * abs(lhs)


class TestNonlinear:
    def test_zero(self, g4):
        assert not nonlinear_term(g4, g4.zeros()).any()

    def test_matches_convolution_oracle(self, g4):
        for c in (taylor_green(g4, 1.3), random_field(g4, np.random.default_rng(5), 1.5)):
            oracle = leray_project(g4, convolution_oracle(g4, c))
            assert np.max(np.abs(nonlinear_term(g4, c) - oracle)) < 1e-12

    def test_energy_neutral(self, g4):
        s = single_mode(g4, (1, 1, 0), 0.7, (0, 0, 1))
        assert abs(inner(nonlinear_term(g4, s), s)) < 1e-12
        c = random_field(g4, np.random.default_rng(6), 1.5, 3.0)
        assert abs(inner(nonlinear_term(g4, c), c)) < 1e-12 * l2_sq(c) ** 1.5

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000))
    def test_trilinear_antisymmetry(self, seed):
        g = SpectralGrid(3)
        gen = np.random.default_rng(seed)
        y, z = random_field(g, gen, 1.5), random_field(g, gen, 1.5)
        assert abs(trilinear_b(g, y, z, z)) < 1e-12
        assert abs(trilinear_b(g, y, z, y) + trilinear_b(g, y, y, z)) < 1e-12


class TestStep:
    def test_zero_equilibrium(self, g4):
        p = NSEParams(K=4, T=0.01, dt=1e-3, record_every=1)
        dW = np.ones((g4.P,) * 3)
        assert not galerkin_step(g4, g4.zeros(), 1e-3, p, dW).any()

    def test_stokes_geometric_decay(self, g4):
        p = NSEParams(K=4, nonlinear=False, taming=False, noise=False, T=0.01, dt=1e-3, record_every=1)
        s = single_mode(g4, (1, 2, 0), 0.3, (0, 0, 1))
        c = s
        for m in range(1, 6):
            c = galerkin_step(g4, c, 1e-3, p)
            assert np.max(np.abs(c - s / (1 + 5e-3) ** m)) < 1e-14

    def test_taming_inactive_bit_identical(self, g4):
        c0 = random_field(g4, np.random.default_rng(7), 1.5, 1.0)
        inc = brownian_increments(1, 8, 100, 1e-3)[None]
        on = NSEParams(K=4, T=0.1, dt=1e-3, record_every=10)
        off = NSEParams(K=4, T=0.1, dt=1e-3, record_every=10, taming=False)
        r1 = simulate(g4, c0[None, None], on, inc)
        r2 = simulate(g4, c0[None, None], off, inc)
        assert r1.taming_activity.max() < on.N
        assert np.array_equal(r1.final, r2.final)

    def test_energy_monotone_noise_off(self, g4):
        c = random_field(g4, np.random.default_rng(8), 1.5, 6.0)
        p = NSEParams(K=4, T=0.05, dt=1e-3, noise=False, N=1.0, record_every=1)
        e = l2_sq(c)
        for _ in range(50):
            c = galerkin_step(g4, c, 1e-3, p)
            e1 = l2_sq(c)
            assert e1 <= e * (1 + 1e-12)
            assert divergence_error(g4, c) <= 1e-12
            e = e1

    def test_divergence_preserved_with_noise(self, g4):
        c0 = random_field(g4, np.random.default_rng(9), 1.5, 3.0)
        p = NSEParams(K=4, T=0.05, dt=1e-3, sigma=0.5, N=1.0, record_every=5)
        run = simulate(g4, np.stack([c0, 0.5 * c0])[None], p, brownian_increments(2, 8, p.steps, p.dt)[None])
        assert run.divergence_max <= 1e-12 and not run.blown.any()

    def test_strong_convergence(self):
        g = SpectralGrid(2)
        c0 = random_field(g, np.random.default_rng(10), 1.5, 2.0)
        S, T, fine_dt = 64, 0.1, 2.5e-4
        inc = np.stack([brownian_increments(s, 8, int(round(T / fine_dt)), fine_dt) for s in range(S)])
        finals = {}
        for f in (8, 4, 2, 1):
            dt = fine_dt * f
            p = NSEParams(K=2, T=T, dt=dt, sigma=1.0, record_every=int(round(T / dt)))
            coarse = inc.reshape(S, -1, f, 8).sum(axis=2)
            finals[dt] = simulate(g, c0[None, None].repeat(S, 0), p, coarse, chunk=S, check_divergence=False).final[:, 0]
        dts = sorted(finals)[::-1]
        errs = [np.sqrt(np.mean(l2_sq(finals[a] - finals[b]))) for a, b in zip(dts[:-1], dts[1:])]
        order = np.polyfit(np.log(dts[:-1]), np.log(errs), 1)[0]
        assert order >= 0.4

    def test_params_validation(self):
        with pytest.raises(ConfigurationError):
            NSEParams(T=0.5, dt=3e-3)
        with pytest.raises(ConfigurationError):
            NSEParams(nu=0.0)


class TestFunctionals:
    def test_phi_zero(self, g4):
        assert phi_eps(g4, g4.zeros(), 1e-8) == 0.0

    def test_phi_single_mode(self, g4):
        a, eps = 0.4, 1e-3
        s = single_mode(g4, (1, 2, 2), a, (0, 1, -1))
        assert phi_eps(g4, s, eps) == pytest.approx(9 * 2 * a * a / (2 * a * a + eps), rel=1e-13)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.1, 100))
    def test_phi_scale_invariant(self, s):
        g = SpectralGrid(3)
        c = random_field(g, np.random.default_rng(0), 1.5)
        assert phi_eps(g, s * c, 1e-14) == pytest.approx(phi_eps(g, c, 1e-14), rel=1e-10)

    def test_phi_requires_positive_eps(self, g4):
        with pytest.raises(ConfigurationError):
            phi_eps(g4, g4.zeros(), 0.0)

    def test_gamma_of_zero_pair(self, g4):
        t = np.linspace(0, 0.5, 6)
        z = np.zeros((6, *g4.shape), dtype=complex)
        np.testing.assert_allclose(gamma_of_t(t, z, z, g4), t, atol=1e-15)

    def test_w14_single_mode_closed_form(self, g4):
        a = 0.3
        s = single_mode(g4, (1, 2, 0), a, (0, 0, 1))
        assert w14_sq(g4, s) == pytest.approx(np.sqrt(6) * a * a * np.sqrt(1 + 25), rel=1e-13)

    def test_gamma_stokes_closed_form(self, g4):
        a, ksq, dt, M = 0.3, 5.0, 1e-4, 5000
        s = single_mode(g4, (1, 2, 0), a, (0, 0, 1))
        t = dt * np.arange(M + 1)
        amp = (1 + dt * ksq) ** -np.arange(M + 1)
        X1 = amp[:, None, None, None, None] * s[None]
        gam = gamma_of_t(t, X1, np.zeros_like(X1), g4)
        lam = np.log1p(dt * ksq) / dt
        w = np.sqrt(6) * a * a * np.sqrt(1 + ksq**2)
        h = 2 * a * a * ksq
        T = t[-1]
        exact = w * (1 - np.exp(-2 * lam * T)) / (2 * lam) + h * h * (1 - np.exp(-4 * lam * T)) / (4 * lam) + T
        assert abs(gam[-1] - exact) <= 1e-6 * exact
        assert np.all(np.diff(gam) > 0)

    def test_gamma_refinement(self):
        coarse, fine = SpectralGrid(4), SpectralGrid(8)
        c0 = random_field(coarse, np.random.default_rng(11), 1.0, 2.0)
        p4 = NSEParams(K=4, T=0.05, dt=1e-3, noise=False, record_every=5)
        p8 = NSEParams(K=8, T=0.05, dt=1e-3, noise=False, record_every=5)
        from logconvex.tamednse import gamma_from_run

        r4 = simulate(coarse, np.stack([c0, 0.5 * c0])[None], p4)
        r8 = simulate(fine, np.stack([refine(coarse, c0, fine), refine(coarse, 0.5 * c0, fine)])[None], p8)
        g4v, g8v = gamma_from_run(r4)[0, -1], gamma_from_run(r8)[0, -1]
        assert abs(g4v - g8v) <= 0.01 * g8v


class TestCoupledInequality:
    def test_identical_initial_data(self, g4):
        c = taylor_green(g4)
        rep = check_theorem3(NSEParams(K=4, T=0.01, dt=1e-3, record_every=5), c, c, paths=100)
        assert rep.passed and rep.degenerate

    def test_too_few_paths(self, g4):
        c = taylor_green(g4)
        with pytest.raises(ConfigurationError):
            check_theorem3(NSEParams(K=4, T=0.01, dt=1e-3, record_every=5), c, 0 * c, paths=10)

    def test_deterministic_version(self):
        g = SpectralGrid(8)
        x1, x2 = default_initial_pair(g)
        p = NSEParams(K=8, T=0.2, dt=1e-3, noise=False, record_every=20)
        rep = check_theorem3(p, x1, x2, paths=2, require_paths=2, batches=1)
        assert rep.fit.found and rep.fit_c7.found
        assert rep.run.diff_l2sq[0, -1] > 0


class TestInterpolation:
    def test_probe(self):
        fit = interpolation_probe(count=100)
        assert fit.covered and 0.5 < fit.alpha < 1
        assert fit.max_ratio <= fit.C * (1 + 1e-12)
