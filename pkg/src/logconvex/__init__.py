"""Numerical laboratory for log-convexity and backward uniqueness of stochastic parabolic equations."""
from .coeffs import ParabolicProblem, get_problem, verify_assumptions
from .config import ExperimentConfig, load_config, parse_config
from .controllability import LinearizedFlow, approx_reach, duality_defect, injectivity_check
from .diagnostics import analyse_path, log_convexity_probe, quotient_trace
from .errors import (
    ConditioningError,
    ConfigurationError,
    DegenerateStateError,
    HypothesisViolation,
    LogConvexError,
    NumericalError,
)
from .grids import Grid1D, TorusGrid
from .noise import NoiseSpec, build_basis, sample_brownian
from .parabolic import solve_random_pde, solve_spde_direct, transform_to_spde

__version__ = "0.1.0"
