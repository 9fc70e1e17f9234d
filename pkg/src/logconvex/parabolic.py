"""Finite-difference integrators for the pathwise (rescaled) equation and the original SPDE.

Both routes share the grid, the diffusion stencil and the Brownian increments,
so their terminal states can be compared path by path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .coeffs import ParabolicProblem, RescaledCoefficients, rescaled_coefficients
from .errors import ConfigurationError, HypothesisViolation, NumericalError
from .grids import Grid1D
from .noise import WienerField, eval_wiener, ito_correction, wiener_values

__all__ = [
    "Grid1D",
    "DiscreteOperator",
    "SchemeParams",
    "Trajectory",
    "assemble_A",
    "assemble_B",
    "solve_random_pde",
    "solve_spde_direct",
    "transform_to_spde",
    "transform_from_spde",
]

BLOWUP = 1e12


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Tridiagonal operator on the interior nodes.

    ``lower[i]`` couples row ``i + 1`` to column ``i``; ``upper[i]`` couples
    row ``i`` to column ``i + 1``.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    t: float = 0.0

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, z: np.ndarray) -> np.ndarray:
        out = self.diag * z
        out[:-1] += self.upper * z[1:]
        out[1:] += self.lower * z[:-1]
        return out

    __matmul__ = matvec

    def toarray(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)

    @property
    def T(self) -> "DiscreteOperator":
        return DiscreteOperator(self.upper.copy(), self.diag.copy(), self.lower.copy(), self.t)

    def __add__(self, other: "DiscreteOperator") -> "DiscreteOperator":
        return DiscreteOperator(self.lower + other.lower, self.diag + other.diag, self.upper + other.upper, self.t)

    def scaled(self, c: float) -> "DiscreteOperator":
        return DiscreteOperator(c * self.lower, c * self.diag, c * self.upper, self.t)

    def plus_diagonal(self, d) -> "DiscreteOperator":
        return DiscreteOperator(self.lower, self.diag + d, self.upper, self.t)

    def banded(self) -> np.ndarray:
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.upper
        ab[1] = self.diag
        ab[2, :-1] = self.lower
        return ab

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return solve_banded((1, 1), self.banded(), rhs, check_finite=False)

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.upper - self.lower), initial=0.0))


def assemble_A(problem: ParabolicProblem, t: float, grid: Grid1D) -> DiscreteOperator:
    """Conservative stencil for ``-(a y')'`` with face-averaged ``a`` and y = 0 at both ends."""
    a_full = np.asarray(problem.a(t, grid.full_nodes), dtype=float)
    if np.any(a_full <= 0):
        raise HypothesisViolation(
            f"ellipticity violated at t={t}: min a = {a_full.min():.6g}"
        )
    faces = 0.5 * (a_full[:-1] + a_full[1:])
    h2 = grid.h**2
    diag = (faces[:-1] + faces[1:]) / h2
    off = -faces[1:-1] / h2
    return DiscreteOperator(off.copy(), diag, off.copy(), float(t))


def _first_derivative(grid: Grid1D, c: np.ndarray, stencil: str) -> DiscreteOperator:
    """Operator ``z -> c z'`` with zero boundary values."""
    n, h = grid.n, grid.h
    if stencil == "centered":
        upper = c[:-1] / (2 * h)
        lower = -c[1:] / (2 * h)
        return DiscreteOperator(lower, np.zeros(n), upper)
    if stencil == "upwind":
        pos = np.maximum(c, 0.0)
        neg = np.minimum(c, 0.0)
        diag = (pos - neg) / h
        lower = -pos[1:] / h
        upper = neg[:-1] / h
        return DiscreteOperator(lower, diag, upper)
    raise ConfigurationError(f"unknown first-derivative stencil {stencil!r}")


def assemble_B(coeffs: RescaledCoefficients, grid: Grid1D, stencil: str = "centered") -> DiscreteOperator:
    """Operator ``z -> a0 z + a1 z'``."""
    op = _first_derivative(grid, np.asarray(coeffs.a1, dtype=float), stencil)
    return DiscreteOperator(op.lower, op.diag + coeffs.a0, op.upper, coeffs.t)


def conjugated_B(A: DiscreteOperator, W: np.ndarray, mu: np.ndarray, drift: DiscreteOperator | None = None) -> DiscreteOperator:
    """Discrete ``e^{-W} A e^{W} - A + mu`` (+ ``e^{-W} b D e^{W}``).

    This is the exact grid-level image of the rescaling, the discrete
    counterpart of ``a0 + a1 d/dx`` built from the same stencil as ``A``.
    """
    ratio_up = np.exp(W[1:] - W[:-1])
    ratio_lo = np.exp(W[:-1] - W[1:])
    upper = A.upper * (ratio_up - 1.0)
    lower = A.lower * (ratio_lo - 1.0)
    op = DiscreteOperator(lower, mu.astype(float).copy(), upper, A.t)
    if drift is not None:
        op = op + DiscreteOperator(drift.lower * ratio_lo, drift.diag, drift.upper * ratio_up, A.t)
    return op


@dataclass(frozen=True)
class SchemeParams:
    """Discretisation switches shared by both solvers.

    ``b_form`` selects how the rescaled lower-order operator is built:
    ``"coefficients"`` uses the pointwise a0, a1 fields, ``"conjugate"`` the
    exact discrete conjugation of the diffusion stencil.
    """

    stencil: str = "centered"
    b_form: str = "coefficients"
    ito: bool = True
    displayed_signs: bool = False
    check_stability: bool = True

    def __post_init__(self):
        if self.b_form not in ("coefficients", "conjugate"):
            raise ConfigurationError(f"unknown b_form {self.b_form!r}")
        if self.stencil not in ("centered", "upwind"):
            raise ConfigurationError(f"unknown stencil {self.stencil!r}")


@dataclass(eq=False)
class Trajectory:
    """States on a time grid with cached discrete L2 norm and H1 energy.

    ``h1_energy[m]`` is ``<A(t_m) z, z>^{1/2}`` for the problem's own diffusion.
    """

    times: np.ndarray
    states: np.ndarray
    grid: Grid1D
    problem: ParabolicProblem
    l2: np.ndarray = field(default=None)
    h1_energy: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.l2 is None or self.h1_energy is None:
            self.l2, self.h1_energy = self._norms()

    def _norms(self):
        l2 = np.sqrt(self.grid.h * np.einsum("mi,mi->m", self.states, self.states))
        energy = np.empty(len(self.times))
        for m, t in enumerate(self.times):
            A = assemble_A(self.problem, float(t), self.grid)
            energy[m] = self.grid.inner(A.matvec(self.states[m]), self.states[m])
        return l2, np.sqrt(np.maximum(energy, 0.0))

    def cache_error(self) -> float:
        """Max relative mismatch between cached and recomputed norms."""
        l2, h1 = self._norms()
        scale = lambda v: np.maximum(np.abs(v), np.finfo(float).tiny)
        return float(max(np.max(np.abs(l2 - self.l2) / scale(l2)), np.max(np.abs(h1 - self.h1_energy) / scale(h1))))

    @property
    def quotient(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.l2 > 0, self.h1_energy**2 / np.where(self.l2 > 0, self.l2**2, 1.0), np.nan)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(self.times, self.states - other.states, self.grid, self.problem)

    def __len__(self):
        return len(self.times)


def _grid_of(field_: WienerField) -> Grid1D:
    grid = field_.basis.domain
    if not isinstance(grid, Grid1D):
        raise ConfigurationError("parabolic solvers need a 1D Wiener field")
    return grid


def _drift_operator(problem, t, grid, stencil):
    b = np.asarray(problem.b(t, grid.nodes), dtype=float)
    if not np.any(b):
        return None
    return _first_derivative(grid, b, stencil)


def lower_order_operator(problem, field_, m, params: SchemeParams, grid=None) -> tuple[DiscreteOperator, float]:
    """The rescaled lower-order operator B(t_m) for the chosen ``b_form`` and ``max |a1|``."""
    grid = grid or _grid_of(field_)
    coeffs = rescaled_coefficients(problem, field_, m, ito=params.ito, displayed_signs=params.displayed_signs)
    a1max = float(np.max(np.abs(coeffs.a1)))
    if params.b_form == "coefficients":
        return assemble_B(coeffs, grid, params.stencil), a1max
    t = float(field_.times[m])
    W, _, _ = eval_wiener(field_, m=m)
    mu = ito_correction(field_.basis, field_.spec) if params.ito else np.zeros(grid.n)
    A = assemble_A(problem, t, grid)
    return conjugated_B(A, W, mu, _drift_operator(problem, t, grid, params.stencil)), a1max


def solve_random_pde(problem: ParabolicProblem, wiener_field: WienerField, x, params: SchemeParams | None = None) -> Trajectory:
    """IMEX integration of ``y' + A y + B y + B1(y) = 0``, ``y(0) = x``.

    Diffusion is backward Euler at ``t_{m+1}``; B and the nonlinearity are
    explicit at ``t_m``.
    """
    params = params or SchemeParams()
    grid = _grid_of(wiener_field)
    times = wiener_field.times
    x = np.asarray(x, dtype=float)
    if x.shape != (grid.n,):
        raise ConfigurationError(f"initial state has shape {x.shape}, expected ({grid.n},)")
    M = len(times) - 1
    states = np.empty((M + 1, grid.n))
    states[0] = x
    Wall = wiener_values(wiener_field)
    nodes = grid.nodes
    y = x.copy()
    for m in range(M):
        t, t1 = float(times[m]), float(times[m + 1])
        dt = t1 - t
        B, a1max = lower_order_operator(problem, wiener_field, m, params, grid)
        if params.check_stability and dt * a1max > grid.h:
            raise ConfigurationError(
                f"dt={dt:.3g} exceeds the IMEX bound h/max|a1| = {grid.h / a1max:.3g} at step {m}"
            )
        rhs = y - dt * (B.matvec(y) + problem.B1(t, nodes, y, Wall[m]))
        lhs = assemble_A(problem, t1, grid).scaled(dt).plus_diagonal(1.0)
        try:
            y = lhs.solve(rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"linear solve failed: {exc}", step=m) from exc
        if not np.all(np.isfinite(y)) or grid.norm(y) > BLOWUP:
            raise NumericalError("rescaled solution blew up", step=m)
        states[m + 1] = y
    return Trajectory(times.copy(), states, grid, problem)


def solve_spde_direct(problem: ParabolicProblem, wiener_field: WienerField, x, params: SchemeParams | None = None) -> Trajectory:
    """Euler-Maruyama for the original equation with implicit diffusion.

    ``X_{m+1} = (I + dt A(t_{m+1}))^{-1} [X_m - dt (b X_m' + psi(X_m)) + X_m dW_m]``.
    """
    params = params or SchemeParams()
    grid = _grid_of(wiener_field)
    times = wiener_field.times
    X = np.asarray(x, dtype=float).copy()
    if X.shape != (grid.n,):
        raise ConfigurationError(f"initial state has shape {X.shape}, expected ({grid.n},)")
    M = len(times) - 1
    states = np.empty((M + 1, grid.n))
    states[0] = X
    Wall = wiener_values(wiener_field)
    nodes = grid.nodes
    for m in range(M):
        t, t1 = float(times[m]), float(times[m + 1])
        dt = t1 - t
        drift = problem.psi(t, nodes, X)
        b_op = _drift_operator(problem, t, grid, params.stencil)
        if b_op is not None:
            drift = drift + b_op.matvec(X)
        rhs = X - dt * drift + X * (Wall[m + 1] - Wall[m])
        lhs = assemble_A(problem, t1, grid).scaled(dt).plus_diagonal(1.0)
        try:
            X = lhs.solve(rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"linear solve failed: {exc}", step=m) from exc
        if not np.all(np.isfinite(X)) or grid.norm(X) > BLOWUP:
            raise NumericalError("direct SPDE solution blew up", step=m)
        states[m + 1] = X
    return Trajectory(times.copy(), states, grid, problem)


def transform_to_spde(trajectory: Trajectory, wiener_field: WienerField) -> Trajectory:
    """``X = e^W y`` node by node."""
    W = _aligned_wiener(trajectory, wiener_field)
    return Trajectory(trajectory.times, np.exp(W) * trajectory.states, trajectory.grid, trajectory.problem)


def transform_from_spde(trajectory: Trajectory, wiener_field: WienerField) -> Trajectory:
    """``y = e^{-W} X`` node by node."""
    W = _aligned_wiener(trajectory, wiener_field)
    return Trajectory(trajectory.times, np.exp(-W) * trajectory.states, trajectory.grid, trajectory.problem)


def _aligned_wiener(trajectory, wiener_field):
    if len(trajectory.times) != len(wiener_field.times) or not np.allclose(trajectory.times, wiener_field.times, rtol=0, atol=1e-12):
        raise ConfigurationError("trajectory and Wiener field use different time grids")
    return wiener_values(wiener_field)


def stability_bound(problem, wiener_field, params: SchemeParams | None = None) -> float:
    """Largest admissible step ``h / max |a1|`` over the path (inf when a1 vanishes)."""
    params = params or SchemeParams()
    grid = _grid_of(wiener_field)
    worst = 0.0
    for m in range(len(wiener_field.times) - 1):
        c = rescaled_coefficients(problem, wiener_field, m, ito=params.ito, displayed_signs=params.displayed_signs)
        worst = max(worst, float(np.max(np.abs(c.a1))))
    return np.inf if worst == 0 else grid.h / worst
