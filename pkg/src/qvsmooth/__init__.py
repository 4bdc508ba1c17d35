"""Smoothness estimation for Gaussian random fields from higher-order quadratic variations."""
from .covariance import CovarianceModel, SiteSet, bessel_k, covariance_matrix, g_nu, matern
from .designs import (CurveDesign, LatticeDesign, LineTransect, curve_sites, lattice_sites,
                      lattice_subset_curve, line_sites, recover_order)
from .estimators import (EstimateResult, SearchConfig, estimate_curve, estimate_lattice,
                         estimate_line_adaptive, estimate_line_fixed_ell, minimize_ratio,
                         naive_log_estimate)
from .grf import SamplerState, factor, sample
from .harness import ExperimentConfig, ExperimentReport, estimate_from_files, run_experiment
from .qvar import (CoefficientRow, VariationStatistic, a_coefficients, b_coefficients,
                   c_coefficients, variation_curve, variation_lattice, variation_line)
from .targets import f_curve, f_lattice, f_line, h_ell, h_ell_nonzero_scan, j_integrand, ratio_F

__version__ = "0.1.0"
