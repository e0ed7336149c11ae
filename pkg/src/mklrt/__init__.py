"""Convex multiple kernel learning for ratio-trace problems.

Kernel weights on the simplex are learned by column generation on a
semi-infinite LP; the embedding is the generalized eigenvector solution of
the resulting KFDA, KCCA or labeled-KCCA pencil.
"""
from .errors import InvalidInputError, MklRtError, NumericalError
from .kernels import (CrossKernelMatrix, KernelMatrix, center_cross, center_train,
                      combine_kernels, distance_from_kernel, is_psd, normalize_trace,
                      rbf_from_distance)
from .ratio_trace import (GevdResult, PsdFactor, RatioTraceInstance, psd_eigenfactor,
                          solve_generic_ratio_trace, solve_gevd_pencil)
from .instances import (InstanceSpec, RatioTraceModel, build_kcca, build_kfda, build_lkcca,
                        compute_xi_kcca, compute_xi_lkcca, fit_instance, project)
from .silp import (MklSolution, SilpState, SolverConfig, column_generation, constraint_score,
                   mkl_rt_fit, most_violated_constraint, solve_restricted_master)
from .baselines import average_kernel, best_individual_kernel, product_kernel
from .evaluation import (EvalReport, average_precision, cross_validate_sigma,
                         mean_average_precision, mean_per_class_accuracy, nn_classify,
                         retrieve_cosine)
from .oracle import brute_force_mkl, grid_simplex, objective_at_mu

__version__ = "0.1.0"
