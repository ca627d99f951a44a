import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vmclab.cut import CutProblem, minimize_massari
from vmclab.estimators import (BarozziCurvature, GraphPMCSolver, HolderExponentEstimator, MassariMinimizer,
                               PsiDecayRegressor)
from vmclab.graph_pmc import GraphProblem, minimize_nonparametric
from vmclab.grid import Ball, GridDomain, HalfSpace, Predicate, ScalarField, rasterize

ALL = [MassariMinimizer, BarozziCurvature, PsiDecayRegressor, HolderExponentEstimator, GraphPMCSolver]


@pytest.mark.parametrize("cls", ALL)
def test_params_roundtrip_and_clone(cls):
    est = cls()
    params = est.get_params()
    twin = clone(est)
    assert twin.get_params() == params and twin is not est


def test_set_params():
    est = BarozziCurvature().set_params(num=12, complement=False)
    assert est.num == 12 and est.complement is False


@pytest.mark.parametrize("cls,method", [(MassariMinimizer, "predict"), (BarozziCurvature, "transform"),
                                        (PsiDecayRegressor, "predict"), (GraphPMCSolver, "predict")])
def test_not_fitted(cls, method):
    with pytest.raises(NotFittedError):
        getattr(cls(), method)(*([[1.0]] if cls is PsiDecayRegressor else []))


def test_wrappers_match_functional_api():
    d = GridDomain.centered(2, 1.0, 32)
    U = rasterize(Ball((0, 0), 0.6), d)
    H = ScalarField(d, np.random.default_rng(0).uniform(-3, 3, d.counts))
    prob = CutProblem(H, rasterize(HalfSpace((0, 1), 0), d), U)
    est = MassariMinimizer().fit(prob)
    assert est.predict() == minimize_massari(prob).mask

    P = GraphProblem((-0.5,), (0.5,), (65,), 1.0, lambda Y, S: 1.0 + 0 * S, 0.0)
    g = GraphPMCSolver().fit(P)
    assert np.array_equal(g.predict(), minimize_nonparametric(P).f)
    assert np.allclose(g.curvature()[1:-1], -1.0, atol=1e-8)

    x = np.linspace(-1, 1, 801)
    h = HolderExponentEstimator().fit(x, np.abs(x) ** 0.5)
    assert h.alpha_ == pytest.approx(0.5, abs=0.03)


def test_barozzi_and_psi_wrappers():
    d = GridDomain.from_bounds([0, 0], [1, 1], 48)
    E = rasterize(Ball((0.5, 0.5), 0.3), d)
    vals = BarozziCurvature(num=24, complement=False, refine_jump=0.05).fit_transform(E)
    assert np.median(vals[E.bits]) == pytest.approx(2 / 0.3, rel=0.1)

    d = GridDomain.centered(2, 1.0, 128)
    corner = rasterize(Predicate(lambda X: (X[..., 0] > 0) & (X[..., 1] > 0)), d)
    radii = [8 * d.h, 16 * d.h, 32 * d.h]
    reg = PsiDecayRegressor(center=(0.0, 0.0), radii=radii).fit(corner)
    assert reg.slope_ == pytest.approx(1.0, abs=0.1)
    assert np.allclose(reg.predict(radii), reg.psi_, rtol=0.1)
