"""Parabolic problem data, rescaled coefficients, Yosida regularisation.

All problems live on (0, pi) in one space dimension, so the diffusion tensor is
the scalar field ``a = a_11``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigurationError, HypothesisViolation
from .noise import WienerField, eval_wiener, ito_correction

Field = Callable[[float, np.ndarray], np.ndarray]
Nonlinearity = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def _zero(t, x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _zero_psi(t, x, r):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(r)).shape)


def _pointwise(f):
    """Lift ``f(r)`` to a ``(t, x, r)`` nonlinearity independent of t and x."""

    def lifted(t, x, r):
        r = np.asarray(r, dtype=float)
        return f(r) * np.ones(np.broadcast(np.asarray(x), r).shape)

    return lifted


def _one(t, x):
    return np.ones_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ParabolicProblem:
    """Coefficients of dX - (a X')' dt + b X' dt + psi(X) dt = X dW on (0, pi).

    ``a_x`` and ``a_t`` are the analytic space and time derivatives of ``a``;
    ``b_div`` is ``b'``. ``psi0`` is the majorant in the Lipschitz-type bound
    ``|psi(r1) - psi(r2)| <= L |r1 - r2| |psi0(r1, r2)|`` and ``q`` its growth
    exponent. ``psi_r_bound`` is the declared sup of ``|psi_r|`` (``inf`` when
    unbounded).
    """

    name: str
    a: Field
    a_x: Field
    a_t: Field
    b: Field = _zero
    b_div: Field = _zero
    psi: Nonlinearity = _zero_psi
    psi_r: Nonlinearity = _zero_psi
    psi0: Callable[[np.ndarray, np.ndarray], np.ndarray] = lambda r1, r2: np.zeros_like(r1)
    L: float = 1.0
    q: float = 0.0
    gamma: float = 1.0
    T: float = 1.0
    psi_r_bound: float = 0.0
    linear_psi: bool = True

    def with_horizon(self, T: float) -> "ParabolicProblem":
        return replace(self, T=float(T))

    def B1(self, t, x, y, W):
        """Rescaled nonlinearity ``e^{-W} psi(t, x, e^{W} y)``."""
        eW = np.exp(W)
        return self.psi(t, x, eW * y) / eW


def heat(T: float = 1.0) -> ParabolicProblem:
    return ParabolicProblem("heat", a=_one, a_x=_zero, a_t=_zero, gamma=1.0, T=T)


def variable_diffusion(T: float = 1.0) -> ParabolicProblem:
    return ParabolicProblem(
        "variable-diffusion",
        a=lambda t, x: 1.0 + 0.5 * t * np.sin(x),
        a_x=lambda t, x: 0.5 * t * np.cos(x),
        a_t=lambda t, x: 0.5 * np.sin(x),
        gamma=1.0 - 0.5 * T,
        T=T,
    )


def cubic(T: float = 1.0) -> ParabolicProblem:
    return ParabolicProblem(
        "cubic",
        a=_one,
        a_x=_zero,
        a_t=_zero,
        psi=_pointwise(lambda r: r**3),
        psi_r=_pointwise(lambda r: 3.0 * r**2),
        psi0=lambda r1, r2: r1 * r1 + r1 * r2 + r2 * r2,
        L=1.0,
        q=2.0,
        gamma=1.0,
        T=T,
        psi_r_bound=np.inf,
        linear_psi=False,
    )


def arctan(T: float = 1.0) -> ParabolicProblem:
    return ParabolicProblem(
        "arctan",
        a=_one,
        a_x=_zero,
        a_t=_zero,
        psi=_pointwise(np.arctan),
        psi_r=_pointwise(lambda r: 1.0 / (1.0 + r**2)),
        psi0=lambda r1, r2: np.ones(np.broadcast(r1, r2).shape),
        L=1.0,
        q=0.0,
        gamma=1.0,
        T=T,
        psi_r_bound=1.0,
        linear_psi=False,
    )


LIBRARY: dict[str, Callable[..., ParabolicProblem]] = {
    "heat": heat,
    "variable-diffusion": variable_diffusion,
    "cubic": cubic,
    "arctan": arctan,
}


def get_problem(name: str, T: float = 1.0) -> ParabolicProblem:
    try:
        return LIBRARY[name](T)
    except KeyError:
        raise ConfigurationError(
            f"unknown problem {name!r}; choose from {sorted(LIBRARY)}"
        ) from None


@dataclass(frozen=True, eq=False)
class RescaledCoefficients:
    """Zeroth- and first-order coefficients of the pathwise equation at one time node."""

    a0: np.ndarray
    a1: np.ndarray
    t: float


def rescaled_coefficients(
    problem: ParabolicProblem,
    wiener_field: WienerField,
    m: int,
    *,
    ito: bool = True,
    displayed_signs: bool = False,
) -> RescaledCoefficients:
    """Coefficients of ``y' - (a y')' + a0 y + a1 y' + e^{-W} psi(e^W y) = 0``.

    Substituting ``X = e^W y`` gives
    ``a0 = mu + b W' - (a W'' + a W'^2 + a_x W')`` and ``a1 = b - 2 a W'``.
    ``displayed_signs=True`` returns the literal printed form
    ``a0 = mu + a W'' + a W'^2 + a_x W'``, ``a1 = 2 a W'`` (no drift), kept so
    the sign slip can be demonstrated; it does not reproduce the SPDE.
    ``ito=False`` drops the Ito correction ``mu`` (mutation testing only).
    """
    grid = wiener_field.basis.domain
    if not hasattr(grid, "nodes"):
        raise ConfigurationError("rescaled coefficients are defined on the 1D grid only")
    t = float(wiener_field.times[m])
    x = grid.nodes
    _, dW, d2W = eval_wiener(wiener_field, m=m)
    if problem.a_x is None or problem.b is None:
        raise ConfigurationError(f"problem {problem.name!r} lacks coefficient derivatives")
    a = problem.a(t, x)
    a_x = problem.a_x(t, x)
    mu = ito_correction(wiener_field.basis, wiener_field.spec) if ito else np.zeros_like(x)
    second = a * (d2W + dW * dW) + a_x * dW
    if displayed_signs:
        return RescaledCoefficients(mu + second, 2.0 * a * dW, t)
    b = problem.b(t, x)
    return RescaledCoefficients(mu + b * dW - second, b - 2.0 * a * dW, t)


def _as_array(v):
    return np.asarray(v, dtype=float)


def yosida(problem: ParabolicProblem, eps: float, t, x, r, *, tol: float = 1e-12, max_iter: int = 200):
    """Yosida approximation ``psi(t, x, y*)`` with ``y* + eps psi(t, x, y*) = r``.

    Vectorised safeguarded Newton: iterates stay inside the bracket between 0
    and ``r``; a Newton step that leaves it is replaced by bisection.
    """
    if eps <= 0:
        raise ConfigurationError("Yosida parameter must be > 0")
    x, r = np.broadcast_arrays(_as_array(x), _as_array(r))

    def g(y):
        return y + eps * problem.psi(t, x, y) - r

    lo = np.minimum(0.0, r)
    hi = np.maximum(0.0, r)
    glo, ghi = g(lo), g(hi)
    if np.any(glo > 0) or np.any(ghi < 0):
        raise HypothesisViolation(
            "Yosida root not bracketed: psi is not monotone nondecreasing with psi(0) = 0"
        )
    y = 0.5 * (lo + hi)
    for _ in range(max_iter):
        gy = g(y)
        lo = np.where(gy < 0, y, lo)
        hi = np.where(gy > 0, y, hi)
        dg = 1.0 + eps * problem.psi_r(t, x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = y - gy / dg
        ok = np.isfinite(newton) & (newton >= lo) & (newton <= hi)
        y_new = np.where(ok, newton, 0.5 * (lo + hi))
        done = np.all(np.abs(y_new - y) <= tol) or np.all(gy == 0)
        y = y_new
        if done:
            break
    out = problem.psi(t, x, y)
    return float(out) if out.ndim == 0 else out


def lipschitz_quotient(problem, y1, y2, wiener_field: WienerField, m: int, *, threshold: float = 1e-14):
    """Divided difference of ``r -> e^{-W} psi(e^W r)`` between ``y2`` and ``y1``; 0 where they coincide."""
    t = float(wiener_field.times[m])
    x = wiener_field.basis.domain.nodes
    W, _, _ = eval_wiener(wiener_field, m=m)
    y1 = np.broadcast_to(_as_array(y1), x.shape)
    y2 = np.broadcast_to(_as_array(y2), x.shape)
    diff = y1 - y2
    num = problem.B1(t, x, y1, W) - problem.B1(t, x, y2, W)
    close = np.abs(diff) <= threshold
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(close, 0.0, num / np.where(close, 1.0, diff))
    return g


@dataclass
class AssumptionReport:
    passed: bool
    ellipticity_margin: float
    symmetric: bool
    psi_zero_ok: bool
    monotone: bool
    majorant_ok: bool
    fitted_growth_constant: float
    failures: list[str] = field(default_factory=list)

    def __str__(self):
        status = "pass" if self.passed else "fail: " + "; ".join(self.failures)
        return (
            f"assumptions {status} (ellipticity margin {self.ellipticity_margin:.6g}, "
            f"fitted growth constant {self.fitted_growth_constant:.6g})"
        )


def verify_assumptions(problem: ParabolicProblem, sample_budget: int = 2000, *, seed: int = 0, r_max: float = 10.0) -> AssumptionReport:
    """Sample (t, x, r) and check ellipticity, psi(0) = 0, monotonicity and the growth majorant.

    Never raises; the fitted growth constant is the smallest ``C`` with
    ``|psi0(r1, r2)| <= C (|r1|^q + |r2|^q + 1)`` on the sample.
    """
    gen = np.random.default_rng(seed)
    n = max(int(sample_budget), 16)
    t = gen.uniform(0.0, problem.T, n)
    x = gen.uniform(0.0, np.pi, n)
    failures = []

    a = np.array([problem.a(ti, xi) for ti, xi in zip(t, x)], dtype=float).ravel()
    margin = float(np.min(a))
    if margin <= 0 or margin < problem.gamma * (1 - 1e-12):
        failures.append(f"ellipticity violated (min eigenvalue {margin:.6g} < gamma {problem.gamma:.6g})")
    symmetric = True  # scalar diffusion in 1D

    zero = np.array([problem.psi(ti, xi, 0.0) for ti, xi in zip(t, x)], dtype=float)
    psi_zero_ok = bool(np.all(zero == 0.0))
    if not psi_zero_ok:
        failures.append("psi(t, x, 0) != 0")

    lattice = np.linspace(-r_max, r_max, 201)
    monotone = True
    for ti, xi in zip(t[:32], x[:32]):
        vals = problem.psi(ti, np.full_like(lattice, xi), lattice)
        if np.any(np.diff(vals) < -1e-12 * (1 + np.abs(vals[1:]))):
            monotone = False
            break
    if not monotone:
        failures.append("psi not nondecreasing in r")

    r1 = gen.uniform(-r_max, r_max, n)
    r2 = gen.uniform(-r_max, r_max, n)
    lhs = np.abs(problem.psi(t, x, r1) - problem.psi(t, x, r2))
    rhs = problem.L * np.abs(r1 - r2) * np.abs(problem.psi0(r1, r2))
    majorant_ok = bool(np.all(lhs <= rhs * (1 + 1e-10) + 1e-12))
    if not majorant_ok:
        failures.append("Lipschitz majorant violated with declared L, psi0")
    growth = np.abs(problem.psi0(r1, r2)) / (np.abs(r1) ** problem.q + np.abs(r2) ** problem.q + 1.0)
    return AssumptionReport(
        passed=not failures,
        ellipticity_margin=margin,
        symmetric=symmetric,
        psi_zero_ok=psi_zero_ok,
        monotone=monotone,
        majorant_ok=majorant_ok,
        fitted_growth_constant=float(np.max(growth)),
        failures=failures,
    )
