"""Spectral Galerkin solver for the stochastic tamed Navier-Stokes system on the 3-torus."""
from .functionals import InterpolationFit, gamma_from_run, gamma_of_t, interpolation_probe, phi_eps
from .integrator import NSEParams, NSERun, galerkin_step, integrate_single, simulate, w14_sq
from .operators import leray_project, nonlinear_term, taming_g, taming_g_prime, trilinear_b
from .spectral import FourierVelocity, SpectralGrid, random_field, single_mode, taylor_green
from .theorem3 import Theorem3Report, check_theorem3, default_initial_pair

__all__ = [
    "FourierVelocity",
    "InterpolationFit",
    "NSEParams",
    "NSERun",
    "SpectralGrid",
    "Theorem3Report",
    "check_theorem3",
    "default_initial_pair",
    "galerkin_step",
    "gamma_from_run",
    "gamma_of_t",
    "integrate_single",
    "interpolation_probe",
    "leray_project",
    "nonlinear_term",
    "phi_eps",
    "random_field",
    "simulate",
    "single_mode",
    "taming_g",
    "taming_g_prime",
    "taylor_green",
    "trilinear_b",
    "w14_sq",
]
