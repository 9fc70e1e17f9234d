"""The four experiment families, their artifacts and parameter sweeps."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .artifacts import write_csv
from .coeffs import get_problem, verify_assumptions
from .config import ConfigError, ExperimentConfig, parse_float_list, parse_modes
from .controllability import LinearizedFlow, approx_reach, duality_defect, injectivity_check
from .diagnostics import (
    Calibration,
    analyse_path,
    functional_form_feature,
    linear_fit_r2,
    log_convexity_probe,
    quotient_trace,
)
from .errors import HypothesisViolation, LogConvexError
from .grids import Grid1D
from .noise import NoiseSpec, build_basis, sample_brownian, uniform_time_grid, zero_field
from .parabolic import solve_random_pde, transform_to_spde
from .rng import derive_seed
from .tamednse.integrator import NSEParams
from .tamednse.spectral import SpectralGrid
from .tamednse.theorem3 import check_theorem3, default_initial_pair

THREADS_ENV = "LOGCONVEX_THREADS"
CONSTANCY_TOL = 1e-4
CONVEXITY_TOL = 1e-8
CLOSED_FORM_TOL = 1e-3
DUALITY_TOL = 1e-10
RATIO_TOL = 4.0
DEGENERATE_DIFF = 1e-6


def worker_count() -> int:
    """Worker cap from ``LOGCONVEX_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _map(fn: Callable, items: list) -> list:
    """Order-preserving map over at most ``worker_count()`` threads."""
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    """Checks, the aggregate report, per-path traces and scalar metrics for sweeps."""

    checks: list[Check]
    report: Table
    traces: dict[str, Table]
    metrics: dict[str, float]
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def sine_combination(grid: Grid1D, text: str) -> np.ndarray:
    x = grid.nodes
    return sum(a * np.sin(k * x) for k, a in parse_modes(text))


def _noise_field(cfg: ExperimentConfig, grid: Grid1D, replicate: int, path: int):
    J = int(cfg["noise.J"])
    spec = NoiseSpec.power_law(J, float(cfg["noise.sigma"]), float(cfg["noise.decay_p"]))
    basis = build_basis(grid, J)
    times = uniform_time_grid(float(cfg["time.T"]), float(cfg["time.dt"]))
    if spec.sigma == 0:
        return zero_field(basis, spec, times)
    return sample_brownian(basis, spec, times, derive_seed(cfg.seed, replicate, path))


def _problem(cfg: ExperimentConfig):
    return get_problem(cfg["problem.name"], T=float(cfg["problem.T"]))


def _calibration(cfg: ExperimentConfig) -> Calibration:
    return Calibration(*(float(cfg[f"diagnostics.C{i}"]) for i in range(1, 5)))


def _trace_table(times, l2, h1, quotient) -> Table:
    return Table(("t", "l2_norm", "h1_energy", "quotient"), [list(r) for r in zip(times, l2, h1, quotient)])


def heat_closed_form_quotient(modes: list[tuple[int, float]], t: np.ndarray) -> np.ndarray:
    """``sum k^2 a_k^2 e^{-2k^2 t} / sum a_k^2 e^{-2k^2 t}`` for the heat semigroup."""
    num = sum(k * k * a * a * np.exp(-2 * k * k * t) for k, a in modes)
    den = sum(a * a * np.exp(-2 * k * k * t) for k, a in modes)
    return num / den


def run_heat_logconvexity(cfg: ExperimentConfig) -> ExperimentResult:
    grid = Grid1D(int(cfg["grid.n"]))
    problem = _problem(cfg)
    field_ = _noise_field(cfg, grid, 0, 0)
    modes = parse_modes(cfg["diagnostics.initial"])
    z = solve_random_pde(problem, field_, sine_combination(grid, cfg["diagnostics.initial"]))
    trace = quotient_trace(z)
    q = trace.quotient[trace.valid]
    checks = []
    deterministic_heat = problem.name == "heat" and float(cfg["noise.sigma"]) == 0.0
    if deterministic_heat and len(modes) == 1:
        dev = float(np.max(np.abs(q - q[0])))
        checks.append(Check("eigenmode-quotient-constancy", dev <= CONSTANCY_TOL, f"max |L(t)-L(0)| = {dev:.3e} (tol {CONSTANCY_TOL:g})"))
    conv = log_convexity_probe(trace, CONVEXITY_TOL)
    checks.append(Check("log-convexity", conv.convex, f"min second difference {conv.min_second_difference:.3e} (tol -{CONVEXITY_TOL:g})"))
    rise = float(np.max(np.diff(q), initial=-np.inf))
    checks.append(Check("quotient-nonincreasing", rise <= CONVEXITY_TOL, f"max increase {rise:.3e} (tol {CONVEXITY_TOL:g})"))
    metrics = {"min_second_difference": conv.min_second_difference, "max_quotient_increase": rise, "quotient_T": float(q[-1])}
    if deterministic_heat:
        exact = heat_closed_form_quotient(modes, trace.times[trace.valid])
        err = float(np.max(np.abs(q - exact)))
        metrics["error"] = err
        checks.append(Check("closed-form-quotient", err <= CLOSED_FORM_TOL, f"max |L - L_exact| = {err:.3e} (tol {CLOSED_FORM_TOL:g})"))
    report = Table(("check", "passed", "detail"), [[c.name, c.passed, c.detail] for c in checks])
    traces = {"trajectory": _trace_table(z.times, z.l2, z.h1_energy, z.quotient)}
    return ExperimentResult(checks, report, traces, metrics)


def run_parabolic_backward(cfg: ExperimentConfig) -> ExperimentResult:
    grid = Grid1D(int(cfg["grid.n"]))
    problem = _problem(cfg)
    t0 = float(cfg["diagnostics.t0"])
    T = float(cfg["time.T"])
    if not 0 <= t0 < T:
        raise ConfigError(f"diagnostics.t0={t0} must lie in [0, time.T)")
    calib = _calibration(cfg)
    x1 = sine_combination(grid, cfg["diagnostics.x1"])
    x2 = sine_combination(grid, cfg["diagnostics.x2"])
    jobs = [(r, p) for r in range(int(cfg["run.replicates"])) for p in range(int(cfg["diagnostics.paths"]))]

    def one(job):
        r, p = job
        f = _noise_field(cfg, grid, r, p)
        y1 = solve_random_pde(problem, f, x1)
        y2 = solve_random_pde(problem, f, x2)
        X1, X2 = transform_to_spde(y1, f), transform_to_spde(y2, f)
        rec = analyse_path(problem, f, y1, y2, X1, X2, t0, calib)
        Z = X1 - X2
        return r, p, rec, _trace_table(Z.times, Z.l2, Z.h1_energy, Z.quotient)

    results = _map(one, jobs)
    records = [res[2] for res in results]
    fitted = np.array([rec.fitted_gamma for rec in records])
    checks = [Check("finite-fitted-gamma", bool(np.all(np.isfinite(fitted))), f"{int(np.sum(np.isfinite(fitted)))}/{len(fitted)} paths finite")]
    ratios = []
    for r in range(int(cfg["run.replicates"])):
        g = np.array([res[2].fitted_gamma for res in results if res[0] == r])
        g = g[np.isfinite(g) & (g > 0)]
        ratios.append(float(g.max() / g.min()) if g.size else np.inf)
    worst = max(ratios)
    checks.append(Check("cross-seed-ratio", worst <= RATIO_TOL, f"max/min fitted gamma {worst:.3f} (tol {RATIO_TOL:g})"))
    eligible = [rec for rec in records if rec.diff_t0 >= DEGENERATE_DIFF]
    contra = all(rec.contrapositive_pass for rec in eligible)
    checks.append(Check("backward-uniqueness-contrapositive", contra, f"{sum(rec.contrapositive_pass for rec in eligible)}/{len(eligible)} eligible paths"))
    checks.append(Check("quotient-bound", all(rec.quotient_bound_pass for rec in records), "calibrated exponential envelope of the quotient"))
    checks.append(Check("backward-estimate", all(rec.estimate_pass for rec in records), "calibrated lower bound on |z(T)|"))
    cols = ("replicate", "path", "seed", "sigma", "nu1", "gamma2", "fitted_gamma1", "fitted_gamma", "quotient_bound_pass", "estimate_pass", "contrapositive_pass")
    report = Table(cols, [[r, p, rec.seed, rec.sigma, rec.nu1, rec.gamma2, rec.fitted_gamma1, rec.fitted_gamma, rec.quotient_bound_pass, rec.estimate_pass, rec.contrapositive_pass] for r, p, rec, _ in results])
    traces = {f"path_r{r:02d}_p{p:04d}": tr for r, p, _, tr in results}
    horizon = T - t0
    feats = functional_form_feature([rec.nu1 for rec in records], [rec.gamma2 for rec in records], horizon, calib)
    metrics = {
        "mean_log_fitted_gamma": float(np.mean(np.log(fitted))),
        "mean_feature": float(np.mean(feats)),
        "mean_nu1": float(np.mean([rec.nu1 for rec in records])),
        "max_ratio": worst,
    }
    return ExperimentResult(checks, report, traces, metrics)


def run_controllability(cfg: ExperimentConfig) -> ExperimentResult:
    grid = Grid1D(int(cfg["grid.n"]))
    problem = _problem(cfg)
    f = _noise_field(cfg, grid, 0, 0)
    flow = LinearizedFlow(problem, f)
    defect = duality_defect(flow, 100, seed=cfg.seed)
    inj = injectivity_check(flow)
    target = sine_combination(grid, cfg["control.target"])
    eps = float(cfg["control.eps"])
    reach = approx_reach(problem, f, target, eps, float(cfg["control.reg"]), flow=flow)
    checks = [
        Check("duality", defect <= DUALITY_TOL, f"max relative defect {defect:.3e} (tol {DUALITY_TOL:g})"),
        Check("injectivity", inj.passed, f"sigma_min = exp({inj.log_sigma_min:.6g})"),
        Check("approximate-reachability", reach.reached, f"distance {reach.achieved_distance:.3e} (eps {eps:g})"),
    ]
    report = Table(
        ("sigma_min", "log_sigma_min", "achieved_distance", "controller_norm", "duality_defect"),
        [[inj.sigma_min, inj.log_sigma_min, reach.achieved_distance, reach.controller_norm, defect]],
    )
    yT = solve_random_pde(problem, f, reach.x).final
    traces = {"controller": Table(("xi", "controller", "target", "reached"), [list(r) for r in zip(grid.nodes, reach.x, target, yT)])}
    metrics = {"log_sigma_min": inj.log_sigma_min, "achieved_distance": reach.achieved_distance, "controller_norm": reach.controller_norm}
    return ExperimentResult(checks, report, traces, metrics)


def nse_params(cfg: ExperimentConfig) -> NSEParams:
    return NSEParams(
        K=int(cfg["nse.K"]),
        N=float(cfg["nse.N_tame"]),
        nu=float(cfg["nse.nu"]),
        dt=float(cfg["nse.dt"]),
        T=float(cfg["nse.T"]),
        sigma=float(cfg["noise.sigma"]),
        J=int(cfg["noise.J"]),
        decay_p=float(cfg["noise.decay_p"]),
        record_every=int(cfg["nse.record_every"]),
    )


def run_tamed_nse(cfg: ExperimentConfig) -> ExperimentResult:
    params = nse_params(cfg)
    grid = SpectralGrid(params.K)
    x1, x2 = default_initial_pair(grid, float(cfg["nse.amplitude"]))
    paths = int(cfg["nse.paths"])
    eps = float(cfg["nse.eps"])
    rep = check_theorem3(params, x1, x2, paths=paths, eps=eps, master_seed=cfg.seed, require_paths=2)
    notes = []
    if paths < 100:
        notes.append(f"only {paths} paths: batch stability is indicative")
    if rep.degenerate:
        checks = [Check("coupled-difference-inequality", True, "identical initial data: degenerate pass")]
        return ExperimentResult(checks, Table(("t",), []), {}, {}, notes)
    fit = rep.fit
    checks = [
        Check("coupled-difference-inequality", fit.found, f"single C = {fit.C}" if fit.found else "no C on the grid covers every t"),
        Check("batch-stability", rep.batch_stable, f"batch C = {', '.join(format(c, '.4g') if c is not None else 'none' for c in rep.batch_C)} (factor 2)"),
        Check("phi-inequality", rep.fit_c7.found, f"C7 = {rep.fit_c7.C}"),
        Check("exclusions", rep.excluded <= 0.05 * paths, f"{rep.excluded}/{paths} blown-up paths excluded"),
        Check("divergence-free", rep.run.divergence_max <= 1e-12, f"max relative |k.u_k| {rep.run.divergence_max:.3e}"),
    ]
    t_idx = np.arange(1, len(rep.times) - 1)
    report = Table(
        ("t", "lhs", "rhs", "standard_error", "min_C"),
        [[rep.times[i], fit.lhs[j], fit.rhs[j], fit.se[j], fit.per_t_min[j]] for j, i in enumerate(t_idx)],
    )
    from .tamednse.functionals import gamma_from_run

    gamma = gamma_from_run(rep.run)
    phi = rep.run.diff_h1sq / (rep.run.diff_l2sq + eps)
    traces = {
        f"path_{p:04d}": Table(("t", "gamma", "diff_l2sq", "phi_eps"), [list(r) for r in zip(rep.times, gamma[p], rep.run.diff_l2sq[p], phi[p])])
        for p in range(paths)
    }
    metrics = {"fitted_C": fit.C if fit.found else np.nan, "fitted_C7": rep.fit_c7.C if rep.fit_c7.found else np.nan}
    for e, c in rep.eps_fits.items():
        notes.append(f"eps = {e:g}: fitted C = {c}")
    return ExperimentResult(checks, report, traces, metrics, notes)


RUNNERS: dict[str, Callable[[ExperimentConfig], ExperimentResult]] = {
    "heat-logconvexity": run_heat_logconvexity,
    "parabolic-backward": run_parabolic_backward,
    "controllability": run_controllability,
    "tamed-nse": run_tamed_nse,
}


def _summary(cfg: ExperimentConfig, result: ExperimentResult) -> str:
    lines = [f"experiment: {cfg.experiment}", f"seed: {cfg.seed}"]
    for c in result.checks:
        lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    for n in result.notes:
        lines.append(f"note: {n}")
    lines.append(f"overall: {'PASS' if result.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


def write_artifacts(cfg: ExperimentConfig, result: ExperimentResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(cfg.serialize())
    write_csv(out / "report.csv", result.report.columns, result.report.rows)
    for name, table in result.traces.items():
        write_csv(out / "traces" / f"{name}.csv", table.columns, table.rows)
    (out / "summary.txt").write_text(_summary(cfg, result))


def execute(cfg: ExperimentConfig) -> ExperimentResult:
    """Run the experiment; hypothesis violations are configuration errors."""
    if cfg.experiment in ("heat-logconvexity", "parabolic-backward", "controllability"):
        verify = verify_assumptions(_problem(cfg), int(cfg["problem.gamma_check_samples"]), seed=cfg.seed)
        if not verify.passed:
            raise ConfigError(f"problem {cfg['problem.name']!r} violates its assumptions: {verify}")
    try:
        return RUNNERS[cfg.experiment](cfg)
    except HypothesisViolation as exc:
        raise ConfigError(str(exc)) from exc


def run_experiment(cfg: ExperimentConfig, out: str | Path) -> int:
    """Run, write artifacts, return the exit status (0 pass, 1 failed check).

    A configured ``[sweep]`` section delegates to :func:`sweep`.
    """
    out = Path(out)
    if cfg["sweep.parameter"] is not None:
        table, fits, ok = sweep(cfg, cfg["sweep.parameter"], parse_float_list(cfg["sweep.values"]))
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.resolved").write_text(cfg.serialize())
        write_csv(out / "report.csv", table.columns, table.rows)
        lines = [f"experiment: {cfg.experiment}", f"sweep: {cfg['sweep.parameter']}"]
        lines += [f"{'PASS' if row[1] else 'FAIL'} {cfg['sweep.parameter']} = {row[0]!r}" for row in table.rows]
        lines += [f"fit: {k} = {v:.6g}" for k, v in fits.items()]
        lines.append(f"overall: {'PASS' if ok else 'FAIL'}")
        (out / "summary.txt").write_text("\n".join(lines) + "\n")
        return 0 if ok else 1
    result = execute(cfg)
    write_artifacts(cfg, result, out)
    return 0 if result.passed else 1


def sweep(cfg: ExperimentConfig, parameter: str, values) -> tuple[Table, dict[str, float], bool]:
    """One row per value with metrics and the pass flag, plus fits across rows.

    Sweeping a time step fits the convergence order of the ``error`` metric;
    sweeping ``noise.sigma`` for the backward experiment regresses the mean
    ``log`` fitted gamma on the mean functional-form feature.
    """
    from .config import SWEEPABLE

    if parameter not in SWEEPABLE:
        raise ConfigError(f"unknown sweep parameter {parameter!r}")
    values = [float(v) for v in values]
    if not values:
        raise ConfigError("sweep needs at least one value")
    results = [execute(cfg.with_value(parameter, v)) for v in values]
    names = sorted(set().union(*(r.metrics for r in results)))
    table = Table(("value", "passed", *names), [[v, r.passed, *(r.metrics.get(n, np.nan) for n in names)] for v, r in zip(values, results)])
    fits: dict[str, float] = {}
    if parameter.endswith(".dt") and len(values) >= 2 and all("error" in r.metrics for r in results):
        err = np.array([r.metrics["error"] for r in results])
        if np.all(err > 0):
            fits["convergence_order"] = float(np.polyfit(np.log(values), np.log(err), 1)[0])
    if parameter == "noise.sigma" and cfg.experiment == "parabolic-backward" and len(values) >= 3:
        x = [r.metrics["mean_feature"] for r in results]
        y = [r.metrics["mean_log_fitted_gamma"] for r in results]
        a, b, r2 = linear_fit_r2(x, y)
        fits.update(regression_intercept=a, regression_slope=b, regression_r2=r2)
    return table, fits, all(r.passed for r in results)


__all__ = ["run_experiment", "sweep", "execute", "ExperimentResult", "Check", "LogConvexError"]
