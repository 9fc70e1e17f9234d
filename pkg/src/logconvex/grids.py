"""Spatial grids: the Dirichlet interval (0, pi) and the periodic 3-torus."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Grid1D:
    """``n`` interior nodes of (0, pi) with homogeneous Dirichlet ends.

    The trapezoid rule with zero boundary values reduces to ``h * sum``, so
    ``weights`` is constant.
    """

    n: int

    def __post_init__(self):
        if self.n < 8:
            raise ConfigurationError(f"Grid1D needs n >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return np.pi / (self.n + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    @cached_property
    def full_nodes(self) -> np.ndarray:
        """Nodes including both boundary points (length n + 2)."""
        return self.h * np.arange(0, self.n + 2)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.n, self.h)

    def inner(self, u, v) -> float:
        return float(self.h * np.dot(u, v))

    def norm(self, u) -> float:
        return float(np.sqrt(self.h * np.dot(u, u)))

    def sample(self, f) -> np.ndarray:
        return np.asarray(f(self.nodes), dtype=float)


@dataclass(frozen=True)
class TorusGrid:
    """Uniform ``P^3`` grid on [0, 2 pi)^3 with the volume-normalised measure.

    Inner products are averages over the torus, so Fourier coefficients satisfy
    Parseval without a (2 pi)^3 factor.
    """

    P: int

    def __post_init__(self):
        if self.P < 4:
            raise ConfigurationError(f"TorusGrid needs P >= 4, got {self.P}")

    @property
    def h(self) -> float:
        return 2 * np.pi / self.P

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.h * np.arange(self.P)
        return tuple(np.meshgrid(x, x, x, indexing="ij"))

    def inner(self, u, v) -> float:
        return float(np.mean(u * v))

    def norm(self, u) -> float:
        return float(np.sqrt(np.mean(u * u)))
