"""IMEX Euler-Maruyama Galerkin integrator for the stochastic tamed Navier-Stokes system."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import rng
from ..errors import ConfigurationError, NumericalError
from ..grids import TorusGrid
from ..noise import NoiseSpec, build_basis
from .operators import _cross, leray_project, physical_velocity_vorticity, taming_g
from .spectral import SpectralGrid, divergence_error, h1_sq, l2_sq

BLOWUP_ENERGY = 1e12


@dataclass(frozen=True)
class NSEParams:
    """Physical and numerical parameters; the three flags switch terms off for diagnostics."""

    K: int = 8
    N: float = 10.0
    nu: float = 1.0
    dt: float = 5e-4
    T: float = 0.5
    sigma: float = 0.1
    J: int = 8
    decay_p: float = 2.0
    nonlinear: bool = True
    taming: bool = True
    noise: bool = True
    record_every: int = 10

    def __post_init__(self):
        if self.K < 1 or self.J < 1:
            raise ConfigurationError("need K >= 1 and J >= 1")
        if self.N < 1 or self.nu <= 0:
            raise ConfigurationError(f"need N >= 1 and nu > 0, got N={self.N}, nu={self.nu}")
        if self.dt <= 0 or self.T <= 0:
            raise ConfigurationError("need dt > 0 and T > 0")
        if abs(self.T / self.dt - round(self.T / self.dt)) > 1e-9 * self.T / self.dt:
            raise ConfigurationError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if self.record_every < 1 or self.steps % self.record_every:
            raise ConfigurationError(f"record_every={self.record_every} must divide the step count {self.steps}")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be nonnegative")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def spec(self) -> NoiseSpec:
        return NoiseSpec.power_law(self.J, self.sigma, self.decay_p)


def noise_basis_values(grid: SpectralGrid, J: int) -> np.ndarray:
    """Lowest ``J`` real trigonometric modes on the physical grid, shape ``(J, P, P, P)``."""
    return build_basis(TorusGrid(grid.P), J).values


def brownian_increments(seed: int, J: int, steps: int, dt: float) -> np.ndarray:
    """Increments ``(steps, J)``; mode ``j`` uses the stream ``(seed, j + 1)``."""
    return np.sqrt(dt) * np.stack([rng.standard_normals(seed, j + 1, steps) for j in range(J)], axis=1)


def galerkin_step(grid: SpectralGrid, c: np.ndarray, dt: float, params: NSEParams, dW: np.ndarray | None = None) -> np.ndarray:
    """One IMEX step for coefficients ``c`` of shape ``(..., 3, L, L, L)``.

    ``dW`` is the physical noise increment ``sum_j mu_j e_j dbeta_j`` with shape
    broadcastable to ``c.shape[:-4] + (P, P, P)``. Convection and taming are
    explicit, the Stokes term implicit.
    """
    explicit = params.nonlinear or params.taming or (params.noise and dW is not None)
    out = c
    if explicit:
        if params.nonlinear:
            u, w = physical_velocity_vorticity(grid, c)
            f = _cross(w, u)
        else:
            u = grid.to_physical(c)
            f = np.zeros_like(u)
        if params.taming:
            r = np.sum(u * u, axis=-4)
            # g vanishes identically below the threshold
            if np.max(r, initial=0.0) > params.N:
                f += taming_g(r, params.N, params.nu)[..., None, :, :, :] * u
        f *= -dt
        if params.noise and dW is not None:
            f += u * dW[..., None, :, :, :]
        out = c + leray_project(grid, grid.to_spectral(f))
    out = out / (1.0 + params.nu * dt * grid.ksq)
    out[..., :, grid.K, grid.K, grid.K] = 0.0
    return out


def w14_sq(grid: SpectralGrid, c: np.ndarray, u: np.ndarray | None = None) -> np.ndarray:
    """``||u||_{W^{1,4}}^2`` with ``||u||^4 = mean(|u|^4 + |grad u|^4)`` on the physical grid."""
    if u is None:
        u = grid.to_physical(c)
    du = grid.to_physical(grid.gradient(c))
    a = np.sum(u * u, axis=-4)
    b = np.sum(du * du, axis=(-5, -4))
    return np.sqrt(np.mean(a * a + b * b, axis=(-3, -2, -1)))


@dataclass
class NSERun:
    """Diagnostics of ``S`` noise paths, each shared by ``G`` members, at ``R`` record times.

    Member arrays have shape ``(S, G, R)``; ``diff_*`` track ``Z = X_1 - X_2``
    when ``G == 2``.
    """

    times: np.ndarray
    l2sq: np.ndarray
    h1sq: np.ndarray
    w14sq: np.ndarray
    taming_activity: np.ndarray
    diff_l2sq: np.ndarray | None
    diff_h1sq: np.ndarray | None
    final: np.ndarray
    blown: np.ndarray
    blow_step: np.ndarray
    divergence_max: float = 0.0
    energy_increase_max: float = field(default=-np.inf)

    @property
    def paths(self) -> int:
        return self.l2sq.shape[0]


def simulate(
    grid: SpectralGrid,
    initial: np.ndarray,
    params: NSEParams,
    increments: np.ndarray | None = None,
    basis_values: np.ndarray | None = None,
    chunk: int = 25,
    check_divergence: bool = True,
) -> NSERun:
    """Integrate ``initial`` of shape ``(S, G, 3, L, L, L)``.

    ``increments`` has shape ``(S, steps, J)``; members of one path share it.
    Blown-up paths (energy above 1e12 or non-finite) are frozen at zero and
    flagged with the step index. The relative divergence defect is tracked
    every step, or only at record times when ``check_divergence`` is false.
    """
    initial = np.asarray(initial, dtype=complex)
    if initial.ndim != 6 or initial.shape[-4:] != grid.shape:
        raise ConfigurationError(f"initial data must have shape (S, G, {grid.shape}), got {initial.shape}")
    S, G = initial.shape[:2]
    M, dt = params.steps, params.dt
    use_noise = params.noise and params.sigma > 0 and increments is not None
    if use_noise:
        if increments.shape != (S, M, params.J):
            raise ConfigurationError(f"increments must have shape {(S, M, params.J)}, got {increments.shape}")
        if basis_values is None:
            basis_values = noise_basis_values(grid, params.J)
        mu = params.spec().mu_array
    R = M // params.record_every + 1
    times = dt * params.record_every * np.arange(R)
    rec = {name: np.zeros((S, G, R)) for name in ("l2sq", "h1sq", "w14sq", "tame")}
    dl2 = np.zeros((S, R)) if G == 2 else None
    dh1 = np.zeros((S, R)) if G == 2 else None
    final = np.empty_like(initial)
    blown = np.zeros(S, dtype=bool)
    blow_step = np.full(S, -1)
    div_max = 0.0
    dE_max = -np.inf
    for start in range(0, S, chunk):
        sl = slice(start, min(S, start + chunk))
        c = initial[sl].copy()
        alive = np.ones(c.shape[0], dtype=bool)

        def record(r, c, u=None):
            if u is None:
                u = grid.to_physical(c)
            rec["l2sq"][sl, :, r] = l2_sq(c)
            rec["h1sq"][sl, :, r] = h1_sq(grid, c)
            rec["w14sq"][sl, :, r] = w14_sq(grid, c, u)
            rec["tame"][sl, :, r] = np.max(np.sum(u * u, axis=-4), axis=(-3, -2, -1))
            if G == 2:
                z = c[:, 0] - c[:, 1]
                dl2[sl, r] = l2_sq(z)
                dh1[sl, r] = h1_sq(grid, z)

        record(0, c)
        for m in range(M):
            dW = None
            if use_noise:
                dW = np.tensordot(increments[sl, m] * mu, basis_values, axes=1)[:, None]
            before = None if use_noise else l2_sq(c)
            c = galerkin_step(grid, c, dt, params, dW)
            after = l2_sq(c)
            energy = np.max(after, axis=1)
            bad = alive & (~np.isfinite(energy) | (energy > BLOWUP_ENERGY))
            if np.any(bad):
                idx = np.nonzero(bad)[0]
                blow_step[start + idx] = m + 1
                alive[idx] = False
                c[idx] = 0.0
            if not use_noise:
                dE_max = max(dE_max, float(np.max((after - before)[alive], initial=-np.inf)))
            if check_divergence or (m + 1) % params.record_every == 0:
                div_max = max(div_max, divergence_error(grid, c))
            if (m + 1) % params.record_every == 0:
                record((m + 1) // params.record_every, c)
        blown[sl] = ~alive
        final[sl] = c
    return NSERun(
        times, rec["l2sq"], rec["h1sq"], rec["w14sq"], rec["tame"], dl2, dh1, final, blown, blow_step, div_max, dE_max
    )


def integrate_single(grid: SpectralGrid, c0: np.ndarray, params: NSEParams, seed: int = 0) -> NSERun:
    """Convenience wrapper: one path, one member, noise drawn from ``seed``."""
    inc = brownian_increments(seed, params.J, params.steps, params.dt)[None] if params.noise else None
    run = simulate(grid, np.asarray(c0)[None, None], params, inc)
    if run.blown[0]:
        raise NumericalError("tamed NSE path blew up", step=int(run.blow_step[0]))
    return run
