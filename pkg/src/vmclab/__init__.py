"""Discrete variational mean curvature on Cartesian grids.

Exact Massari minimizers by min-cut, Barozzi curvature from nested
penalized minimizers, sharpness examples for the Hölder exponent
(p - n)/(p + 1), Ψ-decay and Hölder fits, and a nonparametric graph solver.
"""

__version__ = "0.1.0"

from ._validation import ConfigurationError, DomainMismatchError
from .grid import (Ball, BinaryMask, Cylinder, EmptyRegionWarning, GridDomain, HalfSpace,
                   PerimeterWeights, Predicate, ScalarField, Subgraph, boundary_cells, dilate,
                   lp_norm, perimeter, rasterize)
from .cut import (CutProblem, CutSolution, MinimalityReport, massari_energy, minimize_massari,
                  psi, random_perturbations, verify_minimality, xi)
from .barozzi import (BarozziResult, LambdaSchedule, LambdaSweep, NestednessError,
                      UncoveredCellsWarning, barozzi_curvature, barozzi_field, compose_curvature,
                      lambda_sweep, solve_cp)
from .counterexamples import (Classification, PreconditionError, cusp2d_curvature,
                              cusp2d_lp_classify, cusp2d_normal_field, cusp2d_set,
                              cuspNd_ball_data, cuspNd_classify, cuspNd_normal_field, cuspNd_set,
                              log_example_field, log_example_lipschitz_ratio, lp_threshold,
                              verify_divergence_curvature)
from .regularity import (ExponentParams, ExponentReport, HolderFit, holder_constant, holder_fit,
                         iterate_exponent, normal_transfer_check, psi_decay_fit)
from .graph_pmc import (GraphProblem, GraphSolution, NonConvergenceError, c11_witness_2d,
                        check_divergence_bound, discrete_mean_curvature, minimize_nonparametric)
from .estimators import (BarozziCurvature, GraphPMCSolver, HolderExponentEstimator,
                         MassariMinimizer, PsiDecayRegressor)
