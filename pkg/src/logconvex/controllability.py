"""Linearised flow at the origin, its exact discrete adjoint, injectivity and approximate reachability."""
from __future__ import annotations

from dataclasses import dataclass

import warnings

import numpy as np
from scipy.linalg import LinAlgWarning, cho_factor, cho_solve, solve_banded

from .coeffs import ParabolicProblem
from .errors import ConditioningError, ConfigurationError, HypothesisViolation, NumericalError
from .noise import WienerField, wiener_values
from .parabolic import DiscreteOperator, SchemeParams, _grid_of, assemble_A, lower_order_operator, solve_random_pde

MAX_ASSEMBLY = 256
PSI_R_PROBE = np.linspace(-1e3, 1e3, 2001)


def _check_bounded_psi_r(problem: ParabolicProblem) -> None:
    if not np.isfinite(problem.psi_r_bound):
        raise HypothesisViolation(f"psi_r of problem {problem.name!r} is unbounded")
    probe = np.abs(problem.psi_r(0.0, np.zeros_like(PSI_R_PROBE), PSI_R_PROBE))
    if np.max(probe) > problem.psi_r_bound * (1 + 1e-12) + 1e-12:
        raise HypothesisViolation(
            f"psi_r of problem {problem.name!r} exceeds its declared bound {problem.psi_r_bound}"
        )


def _tridiag_matmat(op: DiscreteOperator, P: np.ndarray) -> np.ndarray:
    out = op.diag[:, None] * P
    out[:-1] += op.upper[:, None] * P[1:]
    out[1:] += op.lower[:, None] * P[:-1]
    return out


class LinearizedFlow:
    """Derivative at the origin of the discrete flow ``x -> y(T)``.

    Step ``m`` maps ``v -> (I + dt A_{m+1})^{-1} (I - dt (B_m + G_m)) v`` with
    ``G_m = psi_r(t_m, ., e^{W} y~)`` and ``y~`` the discrete solution from 0.
    ``G`` is the exact derivative of ``y -> e^{-W} psi(e^{W} y)``.
    """

    def __init__(self, problem: ParabolicProblem, wiener_field: WienerField, params: SchemeParams | None = None):
        _check_bounded_psi_r(problem)
        self.problem = problem
        self.field = wiener_field
        self.params = params or SchemeParams()
        self.grid = _grid_of(wiener_field)
        n = self.grid.n
        self.reference = solve_random_pde(problem, wiener_field, np.zeros(n), self.params)
        W = wiener_values(wiener_field)
        times = wiener_field.times
        self.dts = np.diff(times)
        self._matrix: np.ndarray | None = None
        self._log_inv: float | None = None
        self._implicit: list[DiscreteOperator] = []
        self._explicit: list[DiscreteOperator] = []
        nodes = self.grid.nodes
        for m in range(len(times) - 1):
            t = float(times[m])
            B, _ = lower_order_operator(problem, wiener_field, m, self.params, self.grid)
            G = problem.psi_r(t, nodes, np.exp(W[m]) * self.reference.states[m])
            dt = self.dts[m]
            self._explicit.append((B.plus_diagonal(G)).scaled(-dt).plus_diagonal(1.0))
            self._implicit.append(assemble_A(problem, float(times[m + 1]), self.grid).scaled(dt).plus_diagonal(1.0))

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def steps(self) -> int:
        return len(self._implicit)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``Gamma u``: forward linearised solve; ``u`` may be a vector or a matrix of columns."""
        v = np.array(u, dtype=float)
        for E, I in zip(self._explicit, self._implicit):
            v = solve_banded((1, 1), I.banded(), _apply(E, v), check_finite=False)
        return v

    def apply_adjoint(self, p: np.ndarray) -> np.ndarray:
        """``Gamma^T p``: transposed steps applied in reverse order."""
        z = np.array(p, dtype=float)
        for E, I in zip(reversed(self._explicit), reversed(self._implicit)):
            w = solve_banded((1, 1), I.T.banded(), z, check_finite=False)
            z = _apply(E.T, w)
        return z

    def apply_inverse(self, r: np.ndarray) -> np.ndarray:
        """``Gamma^{-1} r`` (exact backward march of the discrete linear map)."""
        v = np.array(r, dtype=float)
        for E, I in zip(reversed(self._explicit), reversed(self._implicit)):
            try:
                v = solve_banded((1, 1), E.banded(), _apply(I, v), check_finite=False)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise NumericalError(f"linearised step is singular: {exc}") from exc
        return v

    def matrix(self) -> np.ndarray:
        if self.n > MAX_ASSEMBLY:
            raise ConfigurationError(f"flow assembly capped at n={MAX_ASSEMBLY}, got {self.n}")
        if self._matrix is None:
            self._matrix = self.apply(np.eye(self.n))
        return self._matrix.copy()

    def adjoint_matrix(self) -> np.ndarray:
        if self.n > MAX_ASSEMBLY:
            raise ConfigurationError(f"flow assembly capped at n={MAX_ASSEMBLY}, got {self.n}")
        return self.apply_adjoint(np.eye(self.n))

    def log_inverse_norm(self) -> float:
        """``log ||Gamma^{-1}||_2`` from a renormalised product of inverse steps.

        Returns ``inf`` when a step is singular. Largest singular values are
        computed to high relative accuracy, so this yields the smallest singular
        value of ``Gamma`` even far below machine epsilon. Cached per flow.
        """
        if self._log_inv is None:
            self._log_inv = self._log_inverse_norm()
        return self._log_inv

    def _log_inverse_norm(self) -> float:
        P = np.eye(self.n)
        log_scale = 0.0
        for E, I in zip(reversed(self._explicit), reversed(self._implicit)):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", LinAlgWarning)
                    P = solve_banded((1, 1), E.banded(), _tridiag_matmat(I, P), check_finite=False)
            except (np.linalg.LinAlgError, ValueError, LinAlgWarning):
                return np.inf
            if not np.all(np.isfinite(P)):
                return np.inf
            s = np.max(np.abs(P))
            if s == 0:
                return np.inf
            P /= s
            log_scale += np.log(s)
        return float(log_scale + np.log(np.linalg.norm(P, 2)))

    def adjoint_independent(self, p: np.ndarray) -> np.ndarray:
        """Separately discretised backward dual equation ``z' = A z + B^T z + G z``, ``z(T) = p``.

        Backward Euler in reversed time with the diffusion at ``t_m`` and the
        lower-order terms at ``t_{m+1}``; agrees with :meth:`apply_adjoint` to
        ``O(dt + h^2)``.
        """
        times = self.field.times
        nodes = self.grid.nodes
        W = wiener_values(self.field)
        z = np.array(p, dtype=float)
        M = len(times) - 1
        for m in range(M - 1, -1, -1):
            dt = self.dts[m]
            k = min(m + 1, M - 1)
            B, _ = lower_order_operator(self.problem, self.field, k, self.params, self.grid)
            G = self.problem.psi_r(float(times[k]), nodes, np.exp(W[k]) * self.reference.states[k])
            rhs = z - dt * (B.T.matvec(z) + G * z)
            z = assemble_A(self.problem, float(times[m]), self.grid).scaled(dt).plus_diagonal(1.0).solve(rhs)
        return z


def _apply(op: DiscreteOperator, v: np.ndarray) -> np.ndarray:
    return op.matvec(v) if v.ndim == 1 else _tridiag_matmat(op, v)


def linearized_flow(problem, wiener_field, u, params: SchemeParams | None = None) -> np.ndarray:
    """``v(T)`` for the linearised equation started at ``u``."""
    return LinearizedFlow(problem, wiener_field, params).apply(u)


def adjoint_flow(problem, wiener_field, p, params: SchemeParams | None = None) -> np.ndarray:
    """``z(0) = Gamma^* p`` via the exact discrete transpose."""
    return LinearizedFlow(problem, wiener_field, params).apply_adjoint(p)


def duality_defect(flow: LinearizedFlow, pairs: int = 100, seed: int = 0) -> float:
    """Max over random pairs of ``|<Gamma u, p> - <u, Gamma^* p>| / (|u| |p|)``."""
    gen = np.random.default_rng(seed)
    U = gen.standard_normal((flow.n, pairs))
    Pm = gen.standard_normal((flow.n, pairs))
    GU = flow.apply(U)
    GtP = flow.apply_adjoint(Pm)
    h = flow.grid.h
    lhs = h * np.sum(GU * Pm, axis=0)
    rhs = h * np.sum(U * GtP, axis=0)
    scale = h * np.linalg.norm(U, axis=0) * np.linalg.norm(Pm, axis=0)
    return float(np.max(np.abs(lhs - rhs) / scale))


@dataclass
class InjectivityReport:
    passed: bool
    sigma_min: float
    log_sigma_min: float
    sigma_min_svd: float
    sigma_max: float


def injectivity_check(flow: LinearizedFlow | np.ndarray) -> InjectivityReport:
    """Smallest singular value of the discrete adjoint flow.

    For a :class:`LinearizedFlow` the value comes from ``1 / ||Gamma^{-1}||``
    (accurate far below machine epsilon); for a bare matrix only the SVD is
    available and the pass threshold is ``n * eps * sigma_max``. A finite
    ``log_sigma_min`` certifies positivity even when ``sigma_min`` underflows.
    """
    if isinstance(flow, np.ndarray):
        s = np.linalg.svd(flow, compute_uv=False)
        smin, smax = float(s[-1]), float(s[0])
        thresh = flow.shape[0] * np.finfo(float).eps * smax
        log_smin = float(np.log(smin)) if smin > 0 else -np.inf
        return InjectivityReport(smin > thresh, smin, log_smin, smin, smax)
    s = np.linalg.svd(flow.adjoint_matrix(), compute_uv=False)
    log_inv = flow.log_inverse_norm()
    log_smin = -log_inv
    smin = float(np.exp(log_smin)) if np.isfinite(log_smin) else 0.0
    return InjectivityReport(bool(np.isfinite(log_smin)), smin, log_smin, float(s[-1]), float(s[0]))


@dataclass
class ReachResult:
    x: np.ndarray
    achieved_distance: float
    controller_norm: float
    linear_residual: float
    reached: bool


def approx_reach(problem, wiener_field, target, eps: float, reg: float = 0.0, params: SchemeParams | None = None, flow: LinearizedFlow | None = None) -> ReachResult:
    """Tikhonov-regularised start controller for ``target`` at time T.

    Solves ``min |Gamma x - (target - S(T) 0)|^2 + reg |x|^2`` through the
    normal equations, then measures ``|S(T) x - target|`` with the full
    nonlinear flow. The condition number uses the accurate ``sigma_min`` from
    :meth:`LinearizedFlow.log_inverse_norm`; ``reg = 0`` is therefore only
    accepted when ``Gamma`` is well conditioned in double precision.
    """
    if eps <= 0 or reg < 0:
        raise ConfigurationError("need eps > 0 and reg >= 0")
    flow = flow or LinearizedFlow(problem, wiener_field, params)
    target = np.asarray(target, dtype=float)
    rhs = target - flow.reference.final
    grid = flow.grid
    G = flow.matrix()
    smax = float(np.linalg.norm(G, 2))
    log_smin = -flow.log_inverse_norm()
    smin_sq = float(np.exp(2 * log_smin)) if np.isfinite(log_smin) else 0.0
    suggested = max(1e-14 * smax**2, np.finfo(float).tiny)
    denom = smin_sq + reg
    cond = (smax**2 + reg) / denom if denom > 0 else np.inf
    if not np.isfinite(cond) or cond > 1e15:
        raise ConditioningError(f"normal equations condition number {cond:.3g}", suggested_reg=suggested)
    try:
        x = cho_solve(cho_factor(G.T @ G + reg * np.eye(flow.n)), G.T @ rhs)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"normal equations not positive definite: {exc}", suggested_reg=suggested) from exc
    linear_res = grid.norm(flow.apply(x) - rhs)
    yT = solve_random_pde(problem, wiener_field, x, flow.params).final
    dist = grid.norm(yT - target)
    return ReachResult(x, dist, grid.norm(x), linear_res, dist <= eps)
