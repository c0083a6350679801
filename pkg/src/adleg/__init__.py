"""Adaptive Legendre-Galerkin solvers for -(nu u')' + sigma u = f on (-1, 1)."""

from . import kernels
from .adaptive import (AdaptiveConfig, IterationRecord, coarse, compute_J_theta, doerfler,
                       e_doerfler, enrich, run_adleg, run_pc_adleg)
from .basis import (BSVector, IndexSet, bs_to_legendre_derivative, eval_bs_function, norm,
                    project)
from .galerkin import (GalerkinSolution, energy_norm, error_bounds_from_residual, gal, res,
                       reference_solution)
from .legendre import (LegendreSeries, QuadratureRule, adams_A, adams_product_coeff,
                       eval_legendre, gauss_legendre_rule, legendre_transform)
from .operator import (DecayClass, ProblemSpec, StiffnessOperator, apply, entry_diffusion,
                       entry_reaction, fit_decay_class, truncate)
from .problems import CATALOG, build_problem
from .sparsity import (SparsityParams, best_n_term_errors, class_norm_AG, class_norm_lG,
                       fit_decay, n_epsilon, predict_image_class, predict_residual_class)

__version__ = "0.1.0"
