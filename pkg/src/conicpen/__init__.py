"""Quadratic-penalty solver and multiplier diagnostics for conic-constrained problems."""

from .cones import (Cone, Lorentz, Nonpos, Product, Psd, Zero, dist_to_cone, dist_to_polar,
                    parse_cone, project, project_polar)
from .expr import evaluate, grad, parse
from .kkt import KKTReport, RegularityReport, conic_regularity_check, kkt_residuals, licq_check
from .penalty import SolverConfig, multiplier_estimate, replay, solve
from .problem import Problem, load_problem

__version__ = "0.1.0"

__all__ = [
    "Cone", "Zero", "Nonpos", "Lorentz", "Psd", "Product",
    "project", "project_polar", "dist_to_cone", "dist_to_polar", "parse_cone",
    "parse", "evaluate", "grad",
    "KKTReport", "RegularityReport", "kkt_residuals", "licq_check", "conic_regularity_check",
    "SolverConfig", "solve", "replay", "multiplier_estimate",
    "Problem", "load_problem",
]
