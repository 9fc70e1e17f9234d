"""Basis-expanded Wiener process W(t, x) = sum_j mu_j e_j(x) beta_j(t).

The 1D basis is the Dirichlet sine family on (0, pi); the 3D basis is the real
trigonometric family on the torus (orthonormal for the volume-averaged inner
product). Spatial derivatives of W always come from the analytic derivatives of
the basis functions, never from differencing W.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import rng
from .errors import ConfigurationError
from .grids import Grid1D, TorusGrid


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """First ``J`` basis functions sampled on a grid, with first and second derivatives.

    Shapes: 1D ``values/grad/hess`` are ``(J, n)``; on the torus ``values`` is
    ``(J, P, P, P)``, ``grad`` is ``(J, 3, P, P, P)`` and ``hess`` is
    ``(J, 3, 3, P, P, P)``.
    """

    domain: Grid1D | TorusGrid
    J: int
    values: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    wavevectors: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return 1 if isinstance(self.domain, Grid1D) else 3

    def gram(self) -> np.ndarray:
        """Discrete Gram matrix under the domain's quadrature."""
        flat = self.values.reshape(self.J, -1)
        if self.dim == 1:
            return self.domain.h * flat @ flat.T
        return flat @ flat.T / flat.shape[1]

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.J))))

    @cached_property
    def c2_norms(self) -> np.ndarray:
        """Per-mode ``||e_j||_{C^2_b}``: max over nodes of |e|, |grad e|, |D^2 e| (componentwise)."""
        J = self.J
        parts = [
            np.abs(self.values).reshape(J, -1).max(axis=1),
            np.abs(self.grad).reshape(J, -1).max(axis=1),
            np.abs(self.hess).reshape(J, -1).max(axis=1),
        ]
        return np.max(parts, axis=0)

    @cached_property
    def c1_norms_sq(self) -> np.ndarray:
        """Per-mode ``|e_j|_inf^2 + |grad e_j|_inf^2`` (the torus summability weights)."""
        J = self.J
        sup = np.abs(self.values).reshape(J, -1).max(axis=1)
        if self.dim == 1:
            gsup = np.abs(self.grad).max(axis=1)
        else:
            gsup = np.sqrt(np.sum(self.grad**2, axis=1)).reshape(J, -1).max(axis=1)
        return sup**2 + gsup**2


def _sine_basis(grid: Grid1D, J: int) -> OrthonormalBasis:
    j = np.arange(1, J + 1)[:, None]
    x = grid.nodes[None, :]
    c = np.sqrt(2.0 / np.pi)
    values = c * np.sin(j * x)
    grad = c * j * np.cos(j * x)
    hess = -(j**2) * values
    return OrthonormalBasis(grid, J, values, grad, hess)


def torus_wavevectors(J: int) -> list[tuple[int, tuple[int, int, int]]]:
    """Ordered list of ``(kind, k)`` for the first ``J`` real trigonometric modes.

    ``kind`` is 0 for the constant, 1 for cos(k.x), 2 for sin(k.x). Wavevectors
    run over the half lattice (first nonzero component positive) sorted by
    ``(|k|^2, k)``.
    """
    out = [(0, (0, 0, 0))]
    radius = 1
    while len(out) < J:
        half = []
        for k in itertools.product(range(-radius, radius + 1), repeat=3):
            nz = [c for c in k if c != 0]
            if nz and nz[0] > 0:
                half.append(k)
        half.sort(key=lambda k: (sum(c * c for c in k), k))
        out = [(0, (0, 0, 0))]
        for k in half:
            if sum(c * c for c in k) > radius * radius:
                break
            out.extend([(1, k), (2, k)])
        radius += 1
    return out[:J]


def _torus_basis(grid: TorusGrid, J: int) -> OrthonormalBasis:
    X = grid.coords
    modes = torus_wavevectors(J)
    P = grid.P
    values = np.empty((J, P, P, P))
    grad = np.empty((J, 3, P, P, P))
    hess = np.empty((J, 3, 3, P, P, P))
    kvecs = np.zeros((J, 3))
    for idx, (kind, k) in enumerate(modes):
        kvecs[idx] = k
        if kind == 0:
            values[idx] = 1.0
            grad[idx] = 0.0
            hess[idx] = 0.0
            continue
        phase = k[0] * X[0] + k[1] * X[1] + k[2] * X[2]
        s2 = np.sqrt(2.0)
        if kind == 1:
            f, df = s2 * np.cos(phase), -s2 * np.sin(phase)
        else:
            f, df = s2 * np.sin(phase), s2 * np.cos(phase)
        values[idx] = f
        for a in range(3):
            grad[idx, a] = k[a] * df
            for b in range(3):
                hess[idx, a, b] = -k[a] * k[b] * f
    return OrthonormalBasis(grid, J, values, grad, hess, wavevectors=kvecs)


def build_basis(domain: Grid1D | TorusGrid, J: int) -> OrthonormalBasis:
    """Sine basis on (0, pi) or real trigonometric basis on the torus.

    The grid must resolve the highest wavenumber with at least four points per
    unit wavenumber (``n >= 4 J`` in 1D, ``P >= 4 max|k_i|`` on the torus).
    """
    if J < 1:
        raise ConfigurationError(f"mode count must be >= 1, got {J}")
    if isinstance(domain, Grid1D):
        if domain.n < 4 * J:
            raise ConfigurationError(
                f"grid n={domain.n} too coarse for J={J} sine modes (need n >= {4 * J})"
            )
        return _sine_basis(domain, J)
    if isinstance(domain, TorusGrid):
        kmax = max(max(abs(c) for c in k) for _, k in torus_wavevectors(J))
        if domain.P < 4 * max(kmax, 1):
            raise ConfigurationError(
                f"torus grid P={domain.P} too coarse for wavenumber {kmax}"
            )
        return _torus_basis(domain, J)
    raise ConfigurationError(f"unsupported domain {domain!r}")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise amplitudes ``mu_j`` with their generating power law ``sigma * j**-p``."""

    mu: tuple[float, ...]
    sigma: float = 0.0
    decay_p: float = 2.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigurationError("noise amplitude sigma must be >= 0")
        if len(self.mu) < 1:
            raise ConfigurationError("noise needs at least one mode")

    @classmethod
    def power_law(cls, J: int, sigma: float, decay_p: float = 2.0) -> "NoiseSpec":
        j = np.arange(1, J + 1, dtype=float)
        return cls(tuple(float(m) for m in sigma * j ** (-decay_p)), sigma, decay_p)

    @property
    def J(self) -> int:
        return len(self.mu)

    @property
    def mu_array(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    def scaled(self, factor: float) -> "NoiseSpec":
        return NoiseSpec(tuple(factor * m for m in self.mu), abs(factor) * self.sigma, self.decay_p)

    def summability(self, basis: OrthonormalBasis) -> float:
        """Truncated ``sum_j mu_j^2 ||e_j||^2_{C^2_b}``."""
        _check_modes(basis, self)
        return float(np.sum(self.mu_array**2 * basis.c2_norms**2))

    def summability_c1(self, basis: OrthonormalBasis) -> float:
        """Truncated ``sum_j mu_j^2 (|e_j|_inf^2 + |grad e_j|_inf^2)`` used for the fluid noise."""
        _check_modes(basis, self)
        return float(np.sum(self.mu_array**2 * basis.c1_norms_sq))


def _check_modes(basis, spec):
    if basis.J != spec.J:
        raise ConfigurationError(f"basis has {basis.J} modes but noise spec has {spec.J}")


@dataclass(frozen=True, eq=False)
class WienerField:
    """Brownian coefficient paths ``beta[m, j] = beta_j(t_m)`` on a time grid."""

    times: np.ndarray
    beta: np.ndarray
    basis: OrthonormalBasis
    spec: NoiseSpec
    seed: int

    @property
    def M(self) -> int:
        """Number of time steps."""
        return len(self.times) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    def index_of(self, t: float) -> int:
        """Index of grid node ``t``; refuses anything that is not a node."""
        m = int(np.searchsorted(self.times, t))
        tol = 1e-12 * max(1.0, abs(self.times[-1]))
        for cand in (m - 1, m):
            if 0 <= cand < len(self.times) and abs(self.times[cand] - t) <= tol:
                return cand
        raise ConfigurationError(f"t={t!r} is not a time-grid node (no interpolation)")

    def coefficients(self, m: int) -> np.ndarray:
        """``mu_j beta_j(t_m)``, the expansion weights of W at node m."""
        return self.spec.mu_array * self.beta[m]

    def increment_coefficients(self, m: int) -> np.ndarray:
        """``mu_j (beta_j(t_{m+1}) - beta_j(t_m))``."""
        return self.spec.mu_array * (self.beta[m + 1] - self.beta[m])

    def coarsen(self, factor: int) -> "WienerField":
        """Same Brownian path observed on every ``factor``-th node."""
        if factor < 1 or self.M % factor:
            raise ConfigurationError(f"cannot coarsen {self.M} steps by {factor}")
        return WienerField(self.times[::factor], self.beta[::factor], self.basis, self.spec, self.seed)

    def scaled(self, factor: float) -> "WienerField":
        """Field with every ``mu_j`` multiplied by ``factor`` (same Brownian paths)."""
        return WienerField(self.times, self.beta, self.basis, self.spec.scaled(factor), self.seed)

    def with_beta(self, beta: np.ndarray) -> "WienerField":
        return WienerField(self.times, np.asarray(beta, dtype=float), self.basis, self.spec, self.seed)


def uniform_time_grid(T: float, dt: float) -> np.ndarray:
    M = int(round(T / dt))
    if M < 1 or abs(M * dt - T) > 1e-9 * T:
        raise ConfigurationError(f"T={T} is not an integer multiple of dt={dt}")
    return np.linspace(0.0, T, M + 1)


def sample_brownian(basis: OrthonormalBasis, spec: NoiseSpec, time_grid, seed: int) -> WienerField:
    """Independent Brownian paths for each mode, reproducible from ``seed``."""
    _check_modes(basis, spec)
    times = np.asarray(time_grid, dtype=float)
    if times.ndim != 1 or times.size < 1 or times[0] != 0.0:
        raise ConfigurationError("time grid must be one-dimensional and start at 0")
    steps = np.diff(times)
    if np.any(steps <= 0):
        raise ConfigurationError("time grid must be strictly increasing")
    M = steps.size
    beta = np.zeros((M + 1, spec.J))
    if M:
        sq = np.sqrt(steps)
        for j in range(spec.J):
            beta[1:, j] = np.cumsum(sq * rng.standard_normals(seed, j + 1, M))
    return WienerField(times, beta, basis, spec, int(seed))


def zero_field(basis: OrthonormalBasis, spec: NoiseSpec, time_grid) -> WienerField:
    times = np.asarray(time_grid, dtype=float)
    return WienerField(times, np.zeros((times.size, spec.J)), basis, spec, 0)


def eval_wiener(field: WienerField, t: float | None = None, *, m: int | None = None):
    """Return ``(W, grad W, D^2 W)`` at a time-grid node.

    Pass either the node value ``t`` or its index ``m``.
    """
    if m is None:
        if t is None:
            raise ConfigurationError("eval_wiener needs t or m")
        m = field.index_of(t)
    c = field.coefficients(m)
    b = field.basis
    W = np.tensordot(c, b.values, axes=1)
    dW = np.tensordot(c, b.grad, axes=1)
    d2W = np.tensordot(c, b.hess, axes=1)
    return W, dW, d2W


def wiener_values(field: WienerField) -> np.ndarray:
    """W at every node, shape ``(M + 1, *grid)``."""
    c = field.beta * field.spec.mu_array
    return np.tensordot(c, field.basis.values, axes=1)


def ito_correction(basis: OrthonormalBasis, spec: NoiseSpec) -> np.ndarray:
    """Ito correction field ``0.5 * sum_j mu_j^2 e_j^2``."""
    _check_modes(basis, spec)
    return 0.5 * np.tensordot(spec.mu_array**2, basis.values**2, axes=1)
