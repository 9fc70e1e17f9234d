"""Leray projection, the convective term and the taming nonlinearity."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from .spectral import SpectralGrid


def taming_g(r, N: float, nu: float):
    """C^1 taming function.

    Zero on ``[0, N]``; derivative ramps linearly from 0 at ``N`` to ``1/nu``
    at ``N + 1``; linear with slope ``1/nu`` beyond, passing through
    ``1/(2 nu)`` at ``N + 1``.
    """
    if N < 1 or nu <= 0:
        raise ConfigurationError(f"taming needs N >= 1 and nu > 0, got N={N}, nu={nu}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ConfigurationError("taming_g is defined for r >= 0 only")
    s = r - N
    out = np.where(s <= 0, 0.0, np.where(s <= 1, 0.5 * s * s, s - 0.5)) / nu
    return out if out.ndim else float(out)


def taming_g_prime(r, N: float, nu: float):
    r = np.asarray(r, dtype=float)
    out = np.clip(r - N, 0.0, 1.0) / nu
    return out if out.ndim else float(out)


def leray_project(grid: SpectralGrid, c: np.ndarray) -> np.ndarray:
    """``v - k (k.v) / |k|^2`` per mode; the mean mode is zeroed."""
    k = grid.kvec
    kv = np.sum(k * c, axis=-4)
    out = c - k * (kv * grid.inv_ksq)[..., None, :, :, :]
    out[..., :, grid.K, grid.K, grid.K] = 0.0
    return out


def convective_physical(grid: SpectralGrid, c: np.ndarray, u: np.ndarray | None = None) -> np.ndarray:
    """``omega x u`` on the physical grid (the rotational form of ``(u.grad) u``)."""
    if u is None:
        u, w = physical_velocity_vorticity(grid, c)
    else:
        w = grid.to_physical(grid.curl(c))
    return _cross(w, u)


def _cross(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    w1, w2, w3 = w[..., 0, :, :, :], w[..., 1, :, :, :], w[..., 2, :, :, :]
    u1, u2, u3 = u[..., 0, :, :, :], u[..., 1, :, :, :], u[..., 2, :, :, :]
    return np.stack([w2 * u3 - w3 * u2, w3 * u1 - w1 * u3, w1 * u2 - w2 * u1], axis=-4)


def physical_velocity_vorticity(grid: SpectralGrid, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``u`` and ``curl u`` on the physical grid in one batched transform."""
    both = grid.to_physical(np.concatenate([c, grid.curl(c)], axis=-4))
    return both[..., :3, :, :, :], both[..., 3:, :, :, :]


def nonlinear_term(grid: SpectralGrid, c: np.ndarray) -> np.ndarray:
    """``Pi((u.grad) u)`` on the lattice.

    ``(u.grad) u = omega x u + grad |u|^2 / 2`` and the gradient is removed by
    the projection; products are alias-free when ``P >= 3K + 1``.
    """
    return leray_project(grid, grid.to_spectral(convective_physical(grid, c)))


def trilinear_b(grid: SpectralGrid, y: np.ndarray, z: np.ndarray, theta: np.ndarray) -> float:
    """``b(y, z, theta) = mean_x y_i d_i z_j theta_j``."""
    yp = grid.to_physical(y)
    dz = grid.to_physical(grid.gradient(z))
    tp = grid.to_physical(theta)
    return float(np.mean(np.einsum("i...,ij...,j...->...", yp, dz, tp)))
