"""Dirichlet-quotient tracking and the pathwise backward-uniqueness checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateStateError
from .grids import Grid1D
from .noise import WienerField, wiener_values
from .parabolic import DiscreteOperator, Trajectory, assemble_A

DEGENERATE = 1e-14
MACHINE_FLOOR = 1e-300


def dirichlet_quotient(z: np.ndarray, A: DiscreteOperator, grid: Grid1D) -> float:
    """``<A z, z> / |z|_2^2`` with the trapezoid inner product."""
    l2sq = grid.inner(z, z)
    if np.sqrt(l2sq) <= DEGENERATE:
        raise DegenerateStateError(f"|z|_2 = {np.sqrt(l2sq):.3g} is below {DEGENERATE}")
    return grid.inner(A.matvec(z), z) / l2sq


@dataclass(eq=False)
class QuotientTrace:
    """Per-node quotient, squared L2 norm and its log for a difference trajectory.

    Entries from the first node with ``|z|_2 <= 1e-14`` onwards are NaN and
    ``valid`` is False there.
    """

    times: np.ndarray
    quotient: np.ndarray
    l2sq: np.ndarray
    valid: np.ndarray

    @property
    def log_l2sq(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(self.valid, np.log(np.where(self.valid, self.l2sq, 1.0)), np.nan)

    @property
    def degenerate(self) -> bool:
        return not bool(np.all(self.valid))

    def index_of(self, t: float) -> int:
        m = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[m] - t) > 1e-9 * max(1.0, self.times[-1]):
            raise ValueError(f"t0={t} is not a node of the trace")
        return m


def quotient_trace(z: Trajectory) -> QuotientTrace:
    """Trace of a difference trajectory ``z`` (e.g. ``y1 - y2``)."""
    l2sq = z.l2**2
    small = z.l2 <= DEGENERATE
    valid = np.ones(len(z.times), dtype=bool)
    if np.any(small):
        valid[int(np.argmax(small)):] = False
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(valid, z.h1_energy**2 / np.where(valid, l2sq, 1.0), np.nan)
    return QuotientTrace(z.times.copy(), q, np.where(valid, l2sq, np.nan), valid)


@dataclass(frozen=True)
class Calibration:
    """Constants that are only asserted to exist (independent of the path)."""

    C1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0
    C4: float = 1.0


@dataclass(frozen=True)
class PathConstants:
    nu1: float
    gamma2: float
    gamma1_star: float
    gamma_star: float
    calibration: Calibration
    horizon: float

    @classmethod
    def assemble(cls, nu1: float, gamma2: float, calib: Calibration, horizon: float) -> "PathConstants":
        """``gamma1* = C1 + C2 (nu1 + gamma2)^2``, ``gamma* = C4 (nu1 + gamma2 + 1) exp(gamma1* horizon) / gamma1*``."""
        g1 = calib.C1 + calib.C2 * (nu1 + gamma2) ** 2
        with np.errstate(over="ignore"):
            g = calib.C4 * (nu1 + gamma2 + 1.0) / g1 * np.exp(g1 * horizon) if g1 > 0 else np.inf
        return cls(float(nu1), float(gamma2), float(g1), float(g), calib, float(horizon))


def wiener_sup_norms(wiener_field: WienerField) -> tuple[float, float]:
    """``sup_t ||W(t)||_{C^2_b}`` and ``sup |grad W|^2`` over all nodes."""
    b = wiener_field.basis
    c = wiener_field.beta * wiener_field.spec.mu_array
    W = c @ b.values.reshape(b.J, -1)
    dW = c @ b.grad.reshape(b.J, -1)
    d2W = c @ b.hess.reshape(b.J, -1)
    c2 = max(np.max(np.abs(W)), np.max(np.abs(dW)), np.max(np.abs(d2W)))
    return float(c2), float(np.max(dW * dW))


def path_constants(wiener_field: WienerField, X1: Trajectory, X2: Trajectory, problem, calib: Calibration | None = None, t0: float = 0.0) -> PathConstants:
    """Random variables nu1, gamma2 and the derived growth rates for one path.

    ``nu1 = sup_t ||W||_{C^2_b} + sup |grad W|^2`` (the free constant set to 1);
    ``gamma2 = ||e^{-W} X1||_inf^q + ||e^{-W} X2||_inf^q + 1``.
    """
    calib = calib or Calibration()
    c2, grad_sq = wiener_sup_norms(wiener_field)
    nu1 = c2 + grad_sq
    W = wiener_values(wiener_field)
    sup1 = float(np.max(np.abs(np.exp(-W) * X1.states)))
    sup2 = float(np.max(np.abs(np.exp(-W) * X2.states)))
    q = problem.q
    gamma2 = sup1**q + sup2**q + 1.0
    horizon = float(wiener_field.times[-1]) - t0
    return PathConstants.assemble(nu1, gamma2, calib, horizon)


@dataclass
class QuotientBoundReport:
    passed: bool
    degenerate: bool
    max_excess: float
    fitted_gamma1: float


def check_quotient_bound(trace: QuotientTrace, constants: PathConstants, t0: float) -> QuotientBoundReport:
    """Test ``Lambda(t) <= exp(gamma1* (t - t0)) Lambda(t0)`` on ``[t0, T]``.

    ``max_excess`` is ``max_t log(Lambda(t)/Lambda(t0)) - gamma1* (t - t0)``;
    ``fitted_gamma1`` is the smallest nonnegative rate making the bound hold.
    """
    m0 = trace.index_of(t0)
    lam0 = trace.quotient[m0]
    if not trace.valid[m0] or not np.isfinite(lam0) or lam0 <= 0:
        return QuotientBoundReport(False, True, np.nan, np.nan)
    sel = slice(m0 + 1, None)
    ok = trace.valid[sel]
    dt = (trace.times[sel] - trace.times[m0])[ok]
    growth = np.log(trace.quotient[sel][ok] / lam0)
    if growth.size == 0:
        return QuotientBoundReport(True, trace.degenerate, 0.0, 0.0)
    excess = float(np.max(growth - constants.gamma1_star * dt))
    fitted = float(max(0.0, np.max(growth / dt)))
    return QuotientBoundReport(excess <= 0.0, trace.degenerate, excess, fitted)


@dataclass
class BackwardEstimateReport:
    passed: bool
    degenerate: bool
    worst_margin: float
    fitted_gamma: float
    quotient_t0: float
    diff_t0: float
    diff_T: float
    contrapositive_ok: bool


def check_backward_estimate(X1: Trajectory, X2: Trajectory, constants: PathConstants | None, t0: float) -> BackwardEstimateReport:
    """Evaluate ``|Z(t)| <= exp(gamma* ||Z(t0)||_1^2 / |Z(t0)|_2^2) |Z(T)|`` with ``Z = X1 - X2``.

    The margin is the max over ``t in [t0, T]`` of ``log LHS - log RHS`` (<= 0
    means the estimate holds with the supplied ``gamma*``); ``fitted_gamma`` is
    the smallest nonnegative value for which it holds on this path.
    """
    Z = X1 - X2
    m0 = int(np.argmin(np.abs(Z.times - t0)))
    grid = Z.grid
    diff0 = float(Z.l2[m0])
    diffT = float(Z.l2[-1])
    if diff0 <= DEGENERATE:
        coincide = bool(np.all(Z.l2 <= DEGENERATE))
        return BackwardEstimateReport(coincide, True, 0.0, 0.0, np.nan, diff0, diffT, coincide)
    A0 = assemble_A(Z.problem, float(Z.times[m0]), grid)
    lam0 = dirichlet_quotient(Z.states[m0], A0, grid)
    if diffT <= MACHINE_FLOOR:
        return BackwardEstimateReport(False, False, np.inf, np.inf, lam0, diff0, diffT, False)
    log_ratio = np.log(Z.l2[m0:]) - np.log(diffT)
    fitted = float(max(0.0, np.max(log_ratio) / lam0))
    gamma = constants.gamma_star if constants is not None else fitted
    margin = float(np.max(log_ratio - gamma * lam0))
    contra = bool(diffT >= np.exp(-fitted * lam0) * diff0 * (1 - 1e-12) and diffT > MACHINE_FLOOR)
    return BackwardEstimateReport(margin <= 1e-12, False, margin, fitted, float(lam0), diff0, diffT, contra)


@dataclass
class ConvexityReport:
    second_differences: np.ndarray = field(repr=False)
    min_second_difference: float = np.nan
    convex: bool = True

    @property
    def empty(self) -> bool:
        return self.second_differences.size == 0


def log_convexity_probe(trace: QuotientTrace, tol: float = 1e-8) -> ConvexityReport:
    """Second differences of ``log |z(t_m)|_2^2`` over the valid window."""
    logs = trace.log_l2sq[trace.valid]
    if logs.size < 3:
        return ConvexityReport(np.empty(0), np.nan, True)
    d2 = logs[2:] - 2 * logs[1:-1] + logs[:-2]
    mn = float(np.min(d2))
    return ConvexityReport(d2, mn, mn >= -tol)


def convexity_tolerance(dt: float, h: float, base: float = 1e-8, dt_ref: float = 1e-3, h_ref: float = np.pi / 129) -> float:
    """``base`` at the default resolution, scaled by ``(dt^2 + h^2)`` elsewhere."""
    return base * (dt**2 + h**2) / (dt_ref**2 + h_ref**2)


@dataclass
class PathRecord:
    """One row of the per-path backward-uniqueness report."""

    seed: int
    sigma: float
    nu1: float
    gamma2: float
    gamma1_star: float
    gamma_star: float
    fitted_gamma1: float
    fitted_gamma: float
    quotient_t0: float
    diff_t0: float
    diff_T: float
    quotient_bound_pass: bool
    estimate_pass: bool
    contrapositive_pass: bool
    degenerate: bool


def analyse_path(problem, wiener_field: WienerField, y1: Trajectory, y2: Trajectory, X1: Trajectory, X2: Trajectory, t0: float, calib: Calibration | None = None) -> PathRecord:
    """Run the quotient-bound and backward-estimate checks on one coupled pair."""
    consts = path_constants(wiener_field, X1, X2, problem, calib, t0)
    trace = quotient_trace(y1 - y2)
    qb = check_quotient_bound(trace, consts, t0)
    be = check_backward_estimate(X1, X2, consts, t0)
    return PathRecord(
        seed=wiener_field.seed,
        sigma=wiener_field.spec.sigma,
        nu1=consts.nu1,
        gamma2=consts.gamma2,
        gamma1_star=consts.gamma1_star,
        gamma_star=consts.gamma_star,
        fitted_gamma1=qb.fitted_gamma1,
        fitted_gamma=be.fitted_gamma,
        quotient_t0=be.quotient_t0,
        diff_t0=be.diff_t0,
        diff_T=be.diff_T,
        quotient_bound_pass=qb.passed,
        estimate_pass=be.passed,
        contrapositive_pass=be.contrapositive_ok,
        degenerate=be.degenerate or qb.degenerate,
    )


def functional_form_feature(nu1, gamma2, horizon, calib: Calibration | None = None):
    """``gamma1* horizon + log(nu1 + gamma2 + 1) - log gamma1*``: the log of gamma* up to log C4."""
    calib = calib or Calibration()
    nu1 = np.asarray(nu1, dtype=float)
    gamma2 = np.asarray(gamma2, dtype=float)
    g1 = calib.C1 + calib.C2 * (nu1 + gamma2) ** 2
    return g1 * horizon + np.log(nu1 + gamma2 + 1.0) - np.log(g1)


def linear_fit_r2(x, y) -> tuple[float, float, float]:
    """Least-squares line ``y = a + b x``; returns ``(a, b, R^2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    b, a = np.polyfit(x, y, 1)
    resid = y - (a + b * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    floor = y.size * (64 * np.finfo(float).eps * float(np.max(np.abs(y), initial=0.0))) ** 2
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > floor else 1.0
    return float(a), float(b), r2
