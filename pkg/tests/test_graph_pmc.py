import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from helpers import arc_profile, random_piecewise_problem
from vmclab._validation import ConfigurationError
from vmclab.graph_pmc import (GraphProblem, c11_witness_2d, check_divergence_bound, derivative_samples,
                              discrete_mean_curvature, energy, energy_gradient, minimize_nonparametric)


def ones(Y, S):
    return np.ones(np.broadcast_shapes(Y.shape[:-1], np.shape(S)))


def oracle_energy_1d(P, f):
    """Segment lengths minus the quadrature primitive of the vertically sampled H (up to a constant)."""
    from scipy.integrate import quad
    y = P.coordinates()[..., 0]
    h = y[1] - y[0]
    edges = np.linspace(-P.r, P.r, P.samples + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])

    def Hs(yi, s):
        k = min(int((s + P.r) / P.ds), P.samples - 1)
        return float(P.H(np.array([yi]), mids[k]))

    area = float(np.sum(np.hypot(h, np.diff(f))))
    bulk = 0.0
    for i in np.nonzero(~P.boundary_mask())[0]:
        lo, hi = sorted((0.0, f[i]))
        pts = edges[(edges > lo) & (edges < hi)]
        v = quad(lambda s: Hs(y[i], s), lo, hi, points=pts, limit=2 * pts.size + 50)[0]
        bulk += v if f[i] >= 0 else -v
    return area - h * bulk


def test_affine_boundary_with_zero_curvature_gives_plane():
    P = GraphProblem((-1, -1), (1, 1), (9, 9), 2.0, lambda Y, S: 0.0 * S + 0.0 * Y[..., 0],
                     lambda Y: 0.3 * Y[..., 0] - 0.2 * Y[..., 1])
    sol = minimize_nonparametric(P)
    Y = P.coordinates()
    assert np.allclose(sol.f, 0.3 * Y[..., 0] - 0.2 * Y[..., 1], atol=1e-8)
    k = discrete_mean_curvature(sol)
    assert np.all(np.isnan(k[P.boundary_mask()]))
    assert np.allclose(k[~P.boundary_mask()], 0, atol=1e-8)


def test_unit_curvature_gives_arc_with_second_order_error():
    errs = []
    for n in (33, 65, 129):
        P = GraphProblem((-0.5,), (0.5,), (n,), 1.0, ones, 0.0, Phi=1.0)
        sol = minimize_nonparametric(P)
        errs.append(np.max(np.abs(sol.f - arc_profile(np.linspace(-0.5, 0.5, n), 0.5))))
    assert errs[-1] < 1e-3
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(rates) > 1.7


def test_energy_matches_quadrature_oracle():
    P = random_piecewise_problem(4, nodes=12, samples=256)
    free = ~P.boundary_mask()
    rng = np.random.default_rng(0)
    base = P.boundary_values.copy()
    fs = []
    for _ in range(5):
        f = base.copy()
        f[free] = rng.uniform(-0.6, 0.6, free.sum())
        fs.append(f)
    ours = np.array([energy(P, f) for f in fs])
    ref = np.array([oracle_energy_1d(P, f) for f in fs])
    # primitives may differ by a constant
    assert np.allclose(ours - ours[0], ref - ref[0], atol=1e-9)


def test_sign_split_small_problem_matches_global_search():
    c = 1.5
    # H pulls toward the jump at s = 0, where the minimizer sticks
    H = lambda Y, S: np.where(S > 0, -c, c) + 0.0 * Y[..., 0]
    P = GraphProblem((-0.5,), (0.5,), (8,), 1.0, H, lambda Y: 0.6 * Y[..., 0], Phi=c, samples=512)
    sol = minimize_nonparametric(P)
    g = P.boundary_values

    def full(x):
        f = g.copy()
        f[1:-1] = x
        return f

    rng = np.random.default_rng(1)
    best = math.inf
    for _ in range(60):
        x0 = rng.uniform(-0.9, 0.9, 6)
        res = minimize(lambda x: energy(P, full(np.clip(x, -0.999, 0.999))), x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20000, "maxfev": 20000})
        best = min(best, res.fun)
    assert sol.energy <= best + 1e-9


def test_decreasing_H_gives_same_energy_from_every_start():
    P = GraphProblem((-0.5, -0.5), (0.5, 0.5), (17, 17), 1.0,
                     lambda Y, S: -2.0 * S + np.sin(3 * Y[..., 0]), 0.1)
    sol = minimize_nonparametric(P, n_starts=5)
    e = np.asarray(sol.start_energies)
    assert e.max() - e.min() < 1e-9


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_gradient_matches_finite_differences_2d(seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=3)
    P = GraphProblem((0, 0), (1, 1), (6, 6), 1.0,
                     lambda Y, S: c[0] * np.cos(2 * S) + c[1] * Y[..., 0] + c[2] * S * Y[..., 1], 0.0,
                     samples=4096)
    f = np.zeros(P.nodes)
    free = ~P.boundary_mask()
    f[free] = rng.uniform(-0.5, 0.5, free.sum())
    g = energy_gradient(P, f)
    e = 1e-6
    for idx in zip(*np.nonzero(free)):
        fp, fm = f.copy(), f.copy()
        fp[idx] += e
        fm[idx] -= e
        fd = (energy(P, fp) - energy(P, fm)) / (2 * e)
        # piecewise linear primitive: a sample edge inside the stencil costs O(e) error
        assert g[idx] == pytest.approx(fd, abs=1e-5 * (1 + abs(fd)))
    assert np.all(g[~free] == 0)


def test_curvature_of_parabola_and_hemisphere():
    n = 257
    P = GraphProblem((-1,), (1,), (n,), 2.0, ones, 0.0)
    t = np.linspace(-1, 1, n)
    k = discrete_mean_curvature((P, 0.5 * t ** 2))
    assert np.allclose(k[1:-1], (1 + t[1:-1] ** 2) ** -1.5, atol=1e-4)
    R = 1.0
    Q = GraphProblem((-0.4, -0.4), (0.4, 0.4), (81, 81), 2.0, lambda Y, S: 0.0 * S, 0.0)
    Y = Q.coordinates()
    f = np.sqrt(R * R - np.sum(Y ** 2, axis=-1))
    k = discrete_mean_curvature((Q, f))
    inner = ~Q.boundary_mask()
    assert np.allclose(k[inner], -2 / R, rtol=2e-3)


def test_minimizer_curvature_matches_minus_H():
    P = GraphProblem((-0.5,), (0.5,), (129,), 1.0, ones, 0.0)
    sol = minimize_nonparametric(P)
    k = discrete_mean_curvature(sol)
    assert np.allclose(k[1:-1], -1.0, atol=1e-8)


def test_divergence_bound_and_c11_reports():
    sol = minimize_nonparametric(random_piecewise_problem(7, nodes=256, samples=512))
    rep = check_divergence_bound(sol)
    assert rep.passed and rep.slack < 0.05
    x, fp = derivative_samples(sol)
    assert x.shape == fp.shape == (255,)
    c = c11_witness_2d(sol)
    assert c.passed and c.lipschitz <= 1.1 * c.predicted
    with pytest.raises(ConfigurationError):
        check_divergence_bound(sol, Phi=0.01)


def test_problem_validation():
    with pytest.raises(ConfigurationError):
        GraphProblem((0,), (1,), (2,), 1.0, ones)
    with pytest.raises(ConfigurationError):
        GraphProblem((0, 0), (1, 2), (5, 5), 1.0, ones)
    with pytest.raises(ConfigurationError):
        GraphProblem((0,), (1,), (5,), 0.0, ones)
    with pytest.raises(ConfigurationError):
        GraphProblem((0,), (1,), (5,), 1.0, ones, boundary=1.0)
    with pytest.raises(ConfigurationError):
        GraphProblem((0,), (1,), (5,), 1.0, ones, Phi=0.5)
    with pytest.raises(ConfigurationError):
        GraphProblem((0,), (1,), (5,), 1.0, np.ones((5, 7)))
    with pytest.raises(ConfigurationError):
        GraphProblem((0,), (1,), (5,), 1.0, lambda Y, S: np.nan * S)
