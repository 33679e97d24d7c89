"""Iterative soft-thresholding with a median-absolute-deviation threshold.

The package solves ``y = A x + w`` for sparse ``x`` with the iteration
``x <- soft(x - mu A^T (A x - y), gamma * median|.|)`` and provides tools to
locate its fixed points on the LASSO path, judge their local stability and
study the piecewise-linear convergence of the iterates.
"""

__version__ = "0.1.0"

from .linalg import (LinAlgFailure, NonConvergence, NotPositiveDefinite, SingularGram,
                     Spectrum, eigenvalues_dense, operator_norm, rank1_pd_necessary)
from .thresholding import (MAD_TO_SIGMA, check_fixed_point, estimate_sigma,
                           ksparse_threshold, mad_matrix_form, mad_threshold, median_abs, soft)
from .solvers import (SolveOutcome, SolverConfig, Status, adaptive_ista, ista_fixed,
                      kkt_residual, warm_start)
from .path import (DegeneratePath, FixedPointCandidate, PathSegment, Verdict,
                   candidates_for_gamma, gamma_of_lambda, lasso_path, path_solution)
from .stability import StabilityReport, classify, jacobian_at, mu_bound
from .recurrence import RecurrenceLog, build_Bk, detect_piecewise, run_recurrence
from .experiments import ProblemSpec, SweepConfig, generate, sweep
