"""Partially linear single-index varying-coefficient regression with
simultaneous SCAD/LASSO variable selection."""

__version__ = "0.1.0"

from .splines import KnotVector, make_knots, eval_basis, eval_basis_deriv, gram_matrix
from .penalties import PenaltySpec, scad_deriv, scad_value, lqa_weight, build_weight_matrices
from .model import (
    Dataset,
    beta_from_phi,
    phi_from_beta,
    index_jacobian,
    design_row,
    augmented_row,
    h_norm,
)
from .estimator import FitConfig, FitResult, fit_unpenalized, fit_penalized
from .tuning import TuningGrid, adaptive_lambdas, cv_score, select_tuning
from .simulation import SimConfig, SimSummary, gen_dataset, oracle_fit, run_monte_carlo
from .bodyfat import load_bodyfat, siri_consistency, fit_bodyfat

__all__ = [
    "KnotVector", "make_knots", "eval_basis", "eval_basis_deriv", "gram_matrix",
    "PenaltySpec", "scad_deriv", "scad_value", "lqa_weight", "build_weight_matrices",
    "Dataset", "beta_from_phi", "phi_from_beta", "index_jacobian",
    "design_row", "augmented_row", "h_norm",
    "FitConfig", "FitResult", "fit_unpenalized", "fit_penalized",
    "TuningGrid", "adaptive_lambdas", "cv_score", "select_tuning",
    "SimConfig", "SimSummary", "gen_dataset", "oracle_fit", "run_monte_carlo",
    "load_bodyfat", "siri_consistency", "fit_bodyfat",
]
