"""Truncated Fourier lattice on the 3-torus and its padded physical grid.

Velocity coefficients are stored on the full centred lattice ``|k_i| <= K`` with
shape ``(..., 3, L, L, L)``, ``L = 2K + 1``, index ``i`` holding wavenumber
``i - K``. Physical fields are ``u(x) = sum_k u_k e^{i k.x}``, so the mean of
``|u|^2`` over the torus equals ``sum_k |u_k|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from ..errors import ConfigurationError


@dataclass(frozen=True)
class SpectralGrid:
    """Lattice of half-width ``K`` with a physical grid of ``P`` points per axis.

    ``P >= 3K + 1`` makes quadratic products alias-free on the lattice.
    """

    K: int
    P: int = 0
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.K < 1:
            raise ConfigurationError(f"lattice half-width K must be >= 1, got {self.K}")
        if self.P == 0:
            object.__setattr__(self, "P", 3 * self.K + 1)
        if self.P < 2 * self.K + 1:
            raise ConfigurationError(f"physical grid P={self.P} cannot hold lattice K={self.K}")

    @property
    def L(self) -> int:
        return 2 * self.K + 1

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (3, self.L, self.L, self.L)

    @cached_property
    def k1d(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1, dtype=float)

    @cached_property
    def kvec(self) -> np.ndarray:
        """Wavevectors, shape ``(3, L, L, L)``."""
        return np.array(np.meshgrid(self.k1d, self.k1d, self.k1d, indexing="ij"))

    @cached_property
    def ksq(self) -> np.ndarray:
        return np.sum(self.kvec**2, axis=0)

    @cached_property
    def inv_ksq(self) -> np.ndarray:
        out = np.zeros_like(self.ksq)
        nz = self.ksq > 0
        out[nz] = 1.0 / self.ksq[nz]
        return out

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = 2 * np.pi * np.arange(self.P) / self.P
        return tuple(np.meshgrid(x, x, x, indexing="ij"))

    def zeros(self, *batch: int) -> np.ndarray:
        return np.zeros((*batch, *self.shape), dtype=complex)

    def to_physical(self, c: np.ndarray) -> np.ndarray:
        """Real field on the ``P^3`` grid from lattice coefficients (last three axes).

        Axis-by-axis transforms skip the zero padding.
        """
        K, P, L = self.K, self.P, self.L
        w = self.workers
        a = np.zeros((*c.shape[:-3], P, L, K + 1), dtype=complex)
        a[..., : K + 1, :, :] = c[..., K:, :, K:]
        a[..., P - K :, :, :] = c[..., :K, :, K:]
        a = sfft.ifft(a, axis=-3, norm="forward", overwrite_x=True, workers=w)
        b = np.zeros((*c.shape[:-3], P, P, P // 2 + 1), dtype=complex)
        b[..., : K + 1, : K + 1] = a[..., K:, :]
        b[..., P - K :, : K + 1] = a[..., :K, :]
        b = sfft.ifft(b, axis=-2, norm="forward", overwrite_x=True, workers=w)
        return sfft.irfft(b, n=P, axis=-1, norm="forward", workers=w)

    def to_spectral(self, u: np.ndarray) -> np.ndarray:
        """Lattice coefficients of a real ``P^3`` field (higher modes discarded)."""
        K, P = self.K, self.P
        w = self.workers
        h = sfft.rfft(u, axis=-1, norm="forward", workers=w)[..., : K + 1]
        h = sfft.fft(h, axis=-2, norm="forward", overwrite_x=True, workers=w)
        h = np.concatenate([h[..., P - K :, :], h[..., : K + 1, :]], axis=-2)
        h = sfft.fft(h, axis=-3, norm="forward", overwrite_x=True, workers=w)
        c = np.empty((*u.shape[:-3], self.L, self.L, self.L), dtype=complex)
        c[..., :K, :, K:] = h[..., P - K :, :, :]
        c[..., K:, :, K:] = h[..., : K + 1, :, :]
        # the k3 = 0 plane is Hermitian only up to round-off
        plane = c[..., K]
        c[..., K] = 0.5 * (plane + np.conj(plane[..., ::-1, ::-1]))
        c[..., :K] = np.conj(c[..., ::-1, ::-1, ::-1][..., :K])
        return c

    def gradient(self, c: np.ndarray) -> np.ndarray:
        """Coefficients of ``d_i u_j`` with shape ``(..., 3 [i], 3 [j], L, L, L)``."""
        return 1j * self.kvec[:, None] * c[..., None, :, :, :, :]

    def curl(self, c: np.ndarray) -> np.ndarray:
        k = self.kvec
        u1, u2, u3 = c[..., 0, :, :, :], c[..., 1, :, :, :], c[..., 2, :, :, :]
        return 1j * np.stack([k[1] * u3 - k[2] * u2, k[2] * u1 - k[0] * u3, k[0] * u2 - k[1] * u1], axis=-4)

    def divergence(self, c: np.ndarray) -> np.ndarray:
        """``k . u_k`` per mode (the factor ``i`` omitted)."""
        return np.sum(self.kvec * c, axis=-4)


def symmetrize(c: np.ndarray) -> np.ndarray:
    """Closest coefficient array with exact Hermitian symmetry."""
    return 0.5 * (c + np.conj(c[..., ::-1, ::-1, ::-1]))


def hermitian_error(c: np.ndarray) -> float:
    return float(np.max(np.abs(c - np.conj(c[..., ::-1, ::-1, ::-1])), initial=0.0))


def divergence_error(grid: SpectralGrid, c: np.ndarray) -> float:
    """``max_k |k . u_k| / max(|u_k|, tiny)`` over nonzero modes with nonzero coefficient."""
    div = np.abs(grid.divergence(c))
    mag = np.sqrt(np.sum(np.abs(c) ** 2, axis=-4))
    scale = np.where(mag > 0, mag, 1.0)
    return float(np.max(div / scale, initial=0.0))


def l2_sq(c: np.ndarray) -> np.ndarray:
    """``|u|^2`` (torus mean of the squared Euclidean norm)."""
    return np.sum(np.abs(c) ** 2, axis=(-4, -3, -2, -1))


def h1_sq(grid: SpectralGrid, c: np.ndarray) -> np.ndarray:
    """``||u||^2 = sum |k|^2 |u_k|^2``."""
    return np.sum(grid.ksq * np.abs(c) ** 2, axis=(-4, -3, -2, -1))


def h2_norm(grid: SpectralGrid, c: np.ndarray) -> np.ndarray:
    """Full ``H^2`` norm ``(sum (1 + |k|^2)^2 |u_k|^2)^{1/2}``."""
    return np.sqrt(np.sum((1 + grid.ksq) ** 2 * np.abs(c) ** 2, axis=(-4, -3, -2, -1)))


def inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Real ``L^2`` inner product of two real fields given by coefficients."""
    return np.real(np.sum(a * np.conj(b), axis=(-4, -3, -2, -1)))


@dataclass
class FourierVelocity:
    """Divergence-free real velocity on a truncated lattice."""

    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape[-4:] != self.grid.shape:
            raise ConfigurationError(f"coefficient shape {self.coeffs.shape} does not match lattice {self.grid.shape}")

    @classmethod
    def from_physical(cls, grid: SpectralGrid, u: np.ndarray) -> "FourierVelocity":
        from .operators import leray_project

        return cls(grid, leray_project(grid, grid.to_spectral(u)))

    def physical(self) -> np.ndarray:
        return self.grid.to_physical(self.coeffs)

    @property
    def divergence_error(self) -> float:
        return divergence_error(self.grid, self.coeffs)

    @property
    def hermitian_error(self) -> float:
        return hermitian_error(self.coeffs)

    @property
    def l2_sq(self) -> float:
        return float(l2_sq(self.coeffs))

    @property
    def h1_sq(self) -> float:
        return float(h1_sq(self.grid, self.coeffs))

    def __sub__(self, other: "FourierVelocity") -> "FourierVelocity":
        return FourierVelocity(self.grid, self.coeffs - other.coeffs)


def single_mode(grid: SpectralGrid, k, amplitude: float, direction) -> np.ndarray:
    """Real field ``2 a d cos(k.x)``: coefficient ``a d`` at ``+k`` and ``-k``.

    ``direction`` is projected orthogonally to ``k`` and normalised.
    """
    k = np.asarray(k, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d - k * (k @ d) / (k @ k)
    if np.linalg.norm(d) == 0:
        raise ConfigurationError("direction parallel to the wavevector")
    d = d / np.linalg.norm(d)
    c = grid.zeros()
    K = grid.K
    i, j, l = (int(v) + K for v in k)
    c[:, i, j, l] += amplitude * d
    c[:, 2 * K - i, 2 * K - j, 2 * K - l] += amplitude * d
    return c


def taylor_green(grid: SpectralGrid, amplitude: float = 1.0) -> np.ndarray:
    """Coefficients of ``a (sin x cos y cos z, -cos x sin y cos z, 0)``."""
    x, y, z = grid.coords
    u = amplitude * np.stack([np.sin(x) * np.cos(y) * np.cos(z), -np.cos(x) * np.sin(y) * np.cos(z), np.zeros_like(x)])
    return grid.to_spectral(u)


def random_field(grid: SpectralGrid, gen: np.random.Generator, kappa: float, amplitude: float = 1.0) -> np.ndarray:
    """Divergence-free Gaussian field with spectral envelope ``exp(-|k|^2 / (2 kappa^2))``."""
    from .operators import leray_project

    c = (gen.standard_normal(grid.shape) + 1j * gen.standard_normal(grid.shape)) * np.exp(-grid.ksq / (2 * kappa**2))
    c = leray_project(grid, symmetrize(c))
    norm = np.sqrt(l2_sq(c))
    return amplitude * c / norm if norm > 0 else c


def refine(coarse: SpectralGrid, c: np.ndarray, fine: SpectralGrid) -> np.ndarray:
    """Embed coefficients on ``coarse`` into the larger lattice ``fine``."""
    if fine.K < coarse.K:
        raise ConfigurationError("refinement must not shrink the lattice")
    out = np.zeros((*c.shape[:-4], *fine.shape), dtype=complex)
    s = slice(fine.K - coarse.K, fine.K + coarse.K + 1)
    out[..., s, s, s] = c
    return out
