"""Thin scikit-learn style wrappers around the functional API.

Each estimator stores its parameters verbatim in ``__init__``, does the
work in ``fit`` and exposes results as trailing-underscore attributes,
so ``get_params``/``set_params``/``clone`` behave as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .barozzi import barozzi_field
from .cut import CutProblem, minimize_massari
from .graph_pmc import GraphProblem, minimize_nonparametric, discrete_mean_curvature
from .grid import BinaryMask
from .regularity import holder_fit, psi_decay_fit


class MassariMinimizer(BaseEstimator):
    """Exact minimizer of the discrete Massari energy for a :class:`CutProblem`."""

    def fit(self, problem: CutProblem, y=None):
        sol = minimize_massari(problem)
        self.solution_ = sol
        self.mask_ = sol.mask
        self.energy_ = sol.energy
        return self

    def predict(self, problem: CutProblem = None) -> BinaryMask:
        check_is_fitted(self, "mask_")
        return self.mask_ if problem is None else minimize_massari(problem).mask


class BarozziCurvature(BaseEstimator):
    """L1-optimal variational curvature of a set from nested penalized minimizers."""

    def __init__(self, num=64, top_factor=1.0, complement=True, pad_fraction=0.25,
                 tol=0.0, refine_jump=None, min_ratio=1.01, weights=None):
        self.num = num
        self.top_factor = top_factor
        self.complement = complement
        self.pad_fraction = pad_fraction
        self.tol = tol
        self.refine_jump = refine_jump
        self.min_ratio = min_ratio
        self.weights = weights

    def fit(self, E: BinaryMask, y=None, h_E=None):
        res = barozzi_field(E, h_E, weights=self.weights, num=self.num, top_factor=self.top_factor,
                            complement=self.complement, pad_fraction=self.pad_fraction, tol=self.tol,
                            refine_jump=self.refine_jump, min_ratio=self.min_ratio)
        self.result_ = res
        self.curvature_ = res.curvature
        self.uncovered_ = res.uncovered
        return self

    def transform(self, E: BinaryMask = None) -> np.ndarray:
        check_is_fitted(self, "curvature_")
        return np.asarray(self.curvature_.values)

    def fit_transform(self, E, y=None, **fit_params):
        return self.fit(E, y, **fit_params).transform()


class PsiDecayRegressor(BaseEstimator):
    """Log-log fit of the excess Ψ in concentric balls."""

    def __init__(self, center=None, radii=None, weights=None, min_cells=8.0):
        self.center = center
        self.radii = radii
        self.weights = weights
        self.min_cells = min_cells

    def fit(self, E: BinaryMask, y=None):
        rep = psi_decay_fit(E, self.center, self.radii, self.weights, self.min_cells)
        self.report_ = rep
        self.slope_ = rep.slope
        self.alpha_ = rep.implied_alpha
        self.psi_ = rep.psi
        self.flags_ = list(rep.flags)
        return self

    def predict(self, radii) -> np.ndarray:
        """Fitted Ψ at the given radii (NaN when no slope was fitted)."""
        check_is_fitted(self, "report_")
        r = np.asarray(radii, dtype=float)
        if self.slope_ is None:
            return np.full(r.shape, np.nan)
        return np.exp(self.report_.intercept) * r ** self.slope_


class HolderExponentEstimator(BaseEstimator):
    """Hölder exponent and constant of sampled values against sample positions."""

    def __init__(self, alpha_step=0.01, n_bins=24, scale_fraction=0.5, max_pairs=2_000_000, seed=0):
        self.alpha_step = alpha_step
        self.n_bins = n_bins
        self.scale_fraction = scale_fraction
        self.max_pairs = max_pairs
        self.seed = seed

    def fit(self, X, y):
        fit = holder_fit(X, y, self.alpha_step, self.n_bins, self.max_pairs, self.seed, self.scale_fraction)
        self.fit_ = fit
        self.alpha_ = fit.alpha
        self.constant_ = fit.constant
        return self


class GraphPMCSolver(BaseEstimator):
    """Multi-start minimizer of the discrete nonparametric energy."""

    def __init__(self, n_starts=5, seed=0, tol=1e-10, max_iter=200):
        self.n_starts = n_starts
        self.seed = seed
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, problem: GraphProblem, y=None):
        sol = minimize_nonparametric(problem, self.n_starts, self.seed, self.tol, self.max_iter)
        self.solution_ = sol
        self.f_ = sol.f
        self.energy_ = sol.energy
        return self

    def predict(self, problem: GraphProblem = None) -> np.ndarray:
        check_is_fitted(self, "f_")
        return self.f_

    def curvature(self) -> np.ndarray:
        check_is_fitted(self, "solution_")
        return discrete_mean_curvature(self.solution_)
