"""Univariate Stein calculus: Stein operators, kernels and covariance/variance bounds.

Discrete laws use forward (ell = +1) or backward (ell = -1) differences,
continuous laws the derivative (ell = 0).
"""
from .distributions import (Distribution, PearsonOrdTriple, ValidationReport, closed_form_kernel,
                            make_family, validate)
from .errors import *  # noqa: F401,F403
from .lattice import LatticeKind, RealFn, as_realfn, constant, delta, named_function, polynomial
from .numerics import RngState, Tolerance, expectation, integrate_interval, quantile_grid, sum_interval
from .stein_core import (SteinContext, canonical_apply, fisher_info, inverse_apply, inverse_fn,
                         k_kernel, kernel_transform, menz_otto_density, menz_otto_mass, repr_one_mc,
                         repr_two, score, selfadjoint_apply, stein_kernel, stein_solution)
from .bounds import (BoundReport, EigenAnalysis, asymmetric_bl_bound, brascamp_lieb_upper, cov_exact,
                     cov_identity_rhs, eigen_selfadjoint_check, eigen_weight_analysis, lagrange_gap,
                     lower_cramer_rao, table_bounds, upper_klaassen_cov, variance_sandwich)
from .verify import ConditionReport, boundary_conditions_check, invariant_suite

__version__ = "0.1.0"
