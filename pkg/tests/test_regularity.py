import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmclab._validation import ConfigurationError
from vmclab.grid import Ball, BinaryMask, GridDomain, HalfSpace, Predicate, rasterize
from vmclab.regularity import (ExponentParams, cylinder_estimate_check, cylinder_estimate_mask,
                               holder_constant, holder_fit, iterate_exponent, normal_transfer_check,
                               psi_decay_fit, unit_normal)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.floats(0.5, 50.0))
def test_iteration_reaches_fixed_point(n, extra):
    p = n + extra
    rep = iterate_exponent(ExponentParams(n, p))
    assert rep.converged and len(rep.iterates) <= 201
    assert rep.iterates[0] == pytest.approx(0.25 * (1 - n / p), abs=1e-15)
    assert rep.iterates[-1] == pytest.approx((p - n) / (p + 1), abs=1e-12)
    # increasing toward the fixed point
    assert all(b >= a - 1e-15 for a, b in zip(rep.iterates, rep.iterates[1:]))


def test_exponent_infinite_p_and_validation():
    rep = iterate_exponent(ExponentParams(2, math.inf))
    assert rep.iterates[0] == 0.25 and rep.fixed_point == 1.0 and rep.converged
    with pytest.raises(ConfigurationError):
        ExponentParams(3, 3.0)
    with pytest.raises(ConfigurationError):
        ExponentParams(1, 5.0)


@pytest.mark.parametrize("a", [0.3, 0.5, 0.8, 1.0])
def test_holder_fit_recovers_power_exponent(a):
    x = np.linspace(-1, 1, 1201)
    fit = holder_fit(x, np.abs(x) ** a)
    assert fit.alpha == pytest.approx(a, abs=0.03)
    # the constant at the rounded exponent stays near the exact value 1
    assert 1.0 - 1e-9 <= fit.constant <= 1.2


def test_holder_fit_constant_field_and_validation():
    x = np.linspace(0, 1, 500)
    fit = holder_fit(x, np.ones_like(x))
    assert fit.alpha == 1.0 and fit.constant == 0.0
    with pytest.raises(ConfigurationError):
        holder_fit(x[:10], x[:10])
    with pytest.raises(ConfigurationError):
        holder_fit(x, x, scale_fraction=0.0)


def test_holder_constant_lipschitz():
    x = np.linspace(0, 1, 300)
    assert holder_constant(x, 3 * x, 1.0) == pytest.approx(3.0)
    assert holder_constant(x, np.sin(x), 1.0) <= 1.0 + 1e-12


def test_unit_normal():
    nu = unit_normal(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert np.allclose(nu[0], [0, 0, 1])
    assert np.allclose(np.linalg.norm(nu, axis=1), 1)
    assert np.allclose(nu[1], np.array([-3, -4, 1]) / math.sqrt(26))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.floats(0.2, 1.0))
def test_normal_transfer_inequalities_hold(seed, alpha):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (200, 2))
    c = rng.normal(size=3)
    G = np.c_[c[0] * X[:, 0] + c[1] * np.sin(3 * X[:, 1]), c[2] * np.abs(X[:, 0]) ** alpha]
    rep = normal_transfer_check(X, G, alpha)
    assert rep.passed


def test_psi_half_space_is_exact_and_radii_checked():
    d = GridDomain.centered(2, 1.0, 128)
    half = rasterize(HalfSpace((0.0, 1.0), 0.0), d)
    radii = [8 * d.h, 16 * d.h, 32 * d.h]
    rep = psi_decay_fit(half, (0, 0), radii)
    assert "exact minimizer" in rep.flags and rep.implied_alpha is None
    with pytest.raises(ConfigurationError):
        psi_decay_fit(half, (0, 0), radii[:2])
    with pytest.raises(ConfigurationError):
        psi_decay_fit(half, (0, 0), [2 * d.h, 16 * d.h, 32 * d.h])
    with pytest.raises(ConfigurationError):
        psi_decay_fit(half, (0.9, 0), radii)


def test_psi_corner_is_linear():
    d = GridDomain.centered(2, 1.0, 256)
    corner = rasterize(Predicate(lambda X: (X[..., 0] > 0) & (X[..., 1] > 0)), d)
    radii = [8 * d.h * 2 ** k for k in range(4)]
    rep = psi_decay_fit(corner, (0, 0), radii)
    assert rep.slope == pytest.approx(1.0, abs=0.05)
    assert rep.implied_alpha == pytest.approx(0.0, abs=0.03)


def test_psi_sparse_positive_values_flagged():
    d = GridDomain.centered(2, 1.0, 128)
    # a flat set with a small dent: only the largest ball sees it
    E = rasterize(HalfSpace((0.0, 1.0), 0.0), d) - rasterize(Ball((0.2, 0.0), 0.03), d)
    rep = psi_decay_fit(E, (0, 0), [8 * d.h, 12 * d.h, 40 * d.h])
    assert rep.slope is None
    assert "too few positive radii to fit" in rep.flags


def test_cylinder_estimate_on_power_graph():
    a = 0.5
    f = lambda Z: np.abs(Z[:, 0]) ** (1 + a)
    g = lambda Z: ((1 + a) * np.sign(Z[:, 0]) * np.abs(Z[:, 0]) ** a)[:, None]
    rep = cylinder_estimate_check(f, g, [0.0], a, [0.05, 0.1, 0.2, 0.4])
    assert np.allclose(rep.ratios, 1.0, rtol=1e-2) and rep.passed
    with pytest.raises(ConfigurationError):
        cylinder_estimate_check(f, g, [0.3], a, [0.1])


def test_cylinder_estimate_mask():
    d = GridDomain.centered(2, 1.0, 256)
    a = 0.5
    E = rasterize(Predicate(lambda X: X[..., 1] < np.abs(X[..., 0]) ** (1 + a)), d)
    rep = cylinder_estimate_mask(E, (0.0, 0.0), a, [0.1, 0.2, 0.4], constant=1.5)
    assert rep.passed and np.all(rep.ratios <= 1.0 + 1e-9)
    flat = rasterize(HalfSpace((0.0, 1.0), 0.0), d)
    assert np.allclose(cylinder_estimate_mask(flat, (0.0, 0.0), a, [0.1], 1.0).ratios, 0.0)
