"""Sparse polynomial chaos recovery by standard, weighted and re-weighted l1 minimization."""
from .pc_basis import (MeasurementSet, OrderedBasis, assemble, basis_cardinality, basis_matrix,
                       build_basis, eval_basis, eval_legendre_1d, from_matrix, inf_norm)
from .solvers import (RecoveryResult, WeightVector, least_squares, solve_bpdn, solve_reweighted,
                      solve_weighted_bpdn, weighted_least_squares)
from .weights import (DecayModel, TaylorBoundSpec, damped_weights, default_eps_w, elliptic_bound,
                      fit_gk, taylor_bound)
from .cross_validation import CvResult, recover_with_cv, select_epsilon
from .random_field import KlExpansion, eval_field, exponential_kl, gaussian_kl, nu_coefficients
from .elliptic_model import EllipticConfig, EllipticModel, one_dim_study, solve_bvp
from .theory import NullSpaceConstants, RicEstimate, beta_gamma, check_beta_bounds, ric_bruteforce

__version__ = "0.1.0"
