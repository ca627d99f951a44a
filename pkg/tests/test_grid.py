import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import batch_perimeter, crofton_length_2d
from vmclab import io
from vmclab._validation import ConfigurationError, DomainMismatchError
from vmclab.grid import (Ball, BinaryMask, Cylinder, EmptyRegionWarning, GridDomain, HalfSpace,
                         PerimeterWeights, Predicate, ScalarField, Subgraph, boundary_cells, dilate,
                         lp_norm, perimeter, rasterize)

masks8 = arrays(bool, (8, 8))


def _dom(N=8, h=0.5):
    return GridDomain((N, N), h, (0.0, 0.0))


def test_domain_basics():
    d = GridDomain.centered(2, 1.0, 4)
    assert d.counts == (4, 4) and d.h == 0.5
    assert np.allclose(d.axis_centers(0), [-0.75, -0.25, 0.25, 0.75])
    assert d.centers().shape == (4, 4, 2)
    assert d.index_of((0.1, -0.9)) == (2, 0)
    assert GridDomain.from_dict(d.to_dict()) == d
    with pytest.raises(ConfigurationError):
        GridDomain((4,), 0.5, (0.0,))
    with pytest.raises(ConfigurationError):
        GridDomain((4, 4), -1.0, (0.0, 0.0))


def test_mask_algebra_and_domain_checks():
    d = _dom(4)
    a = BinaryMask(d, np.eye(4, dtype=bool))
    b = BinaryMask(d, np.ones((4, 4), dtype=bool))
    assert (a & b) == a and (a | b) == b and (b - a).count == 12 and (~a).count == 12
    assert a.issubset(b) and not b.issubset(a)
    with pytest.raises(ValueError):
        a.bits[0, 0] = False
    other = BinaryMask(_dom(4, 1.0), np.eye(4, dtype=bool))
    with pytest.raises(DomainMismatchError):
        a & other


def test_single_cell_perimeter_is_normal_length_sum():
    for name in ("n4", "n8", "n16"):
        w = PerimeterWeights.standard(2, name)
        d = _dom(7, 1.0)
        bits = np.zeros((7, 7), bool)
        bits[3, 3] = True
        per = perimeter(BinaryMask(d, bits), weights=w)
        assert per == pytest.approx(2 * sum(w.weights))
    assert PerimeterWeights.standard(2, "n4").weights == (1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(masks8, masks8)
def test_perimeter_matches_independent_count(bits, region):
    d = _dom()
    w = PerimeterWeights.standard(2)
    got = perimeter(BinaryMask(d, bits), BinaryMask(d, region), w)
    ref = batch_perimeter(bits[None], d.h, w.offsets, w.weights, region)[0]
    assert got == pytest.approx(ref, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(masks8, masks8)
def test_perimeter_complement_symmetry_and_additivity(bits, region):
    d = _dom()
    E = BinaryMask(d, bits)
    R = BinaryMask(d, region)
    assert perimeter(E, R) == pytest.approx(perimeter(~E, R))
    assert perimeter(E, R) + perimeter(E, ~R) == pytest.approx(perimeter(E))


@settings(max_examples=60, deadline=None)
@given(masks8, masks8)
def test_perimeter_submodular(a, b):
    d = _dom()
    A, B = BinaryMask(d, a), BinaryMask(d, b)
    assert perimeter(A | B) + perimeter(A & B) <= perimeter(A) + perimeter(B) + 1e-12


def test_stencil_weights_match_crofton_density():
    w = PerimeterWeights.standard(2)
    for th in np.linspace(0, np.pi, 13):
        ref = crofton_length_2d(w.full_stencil(), th) / 2
        assert w.normal_length([np.cos(th), np.sin(th)])[0] == pytest.approx(ref)


def test_default_stencils_are_nearly_isotropic():
    assert PerimeterWeights.standard(2).anisotropy() < 0.02
    assert PerimeterWeights.standard(3).anisotropy() < 0.06
    # axis normal length exact
    assert PerimeterWeights.standard(2).normal_length([1.0, 0.0])[0] == pytest.approx(1.0)


def test_disk_perimeter_converges():
    d = GridDomain.from_bounds([0, 0], [1, 1], 1024)
    E = rasterize(Ball((0.5, 0.5), 0.3), d)
    assert perimeter(E) == pytest.approx(2 * math.pi * 0.3, rel=0.01)


def test_half_plane_perimeter_in_region_is_exact():
    d = GridDomain.centered(2, 1.0, 64)
    E = rasterize(HalfSpace((0.0, 1.0), 0.0), d)
    box = np.zeros(d.counts, bool)
    box[16:48, 8:56] = True
    assert perimeter(E, BinaryMask(d, box)) == pytest.approx(32 * d.h)


def test_weights_validation():
    with pytest.raises(ConfigurationError):
        PerimeterWeights(((1, 0), (-1, 0)), (1.0, 1.0))
    with pytest.raises(ConfigurationError):
        PerimeterWeights(((1, 0),), (-1.0,))
    with pytest.raises(DomainMismatchError):
        perimeter(BinaryMask.empty(_dom()), weights=PerimeterWeights.standard(3))


def test_shapes_and_clipping():
    d = GridDomain.centered(3, 1.0, 16)
    assert rasterize(Ball((0, 0, 0), 0.5), d).meta["clipped"] is False
    assert rasterize(Ball((0.8, 0, 0), 0.5), d).meta["clipped"] is True
    cyl = rasterize(Cylinder((0, 0, 0), 0.5), d)
    ball = rasterize(Ball((0, 0, 0), 0.5), d)
    assert ball.issubset(cyl)
    sub = rasterize(Subgraph(lambda Y: 0.1 * Y[..., 0]), d)
    pred = rasterize(Predicate(lambda X: X[..., 2] < 0.1 * X[..., 0]), d)
    assert sub == pred
    with pytest.raises(DomainMismatchError):
        rasterize(Subgraph(np.zeros((3, 3))), d)


def test_dilate_and_boundary_cells():
    d = _dom(9, 1.0)
    bits = np.zeros((9, 9), bool)
    bits[4, 4] = True
    w = PerimeterWeights.standard(2, "n4")
    assert dilate(BinaryMask(d, bits), w).count == 5
    sq = np.zeros((9, 9), bool)
    sq[2:7, 2:7] = True
    assert boundary_cells(BinaryMask(d, sq)).count == 16


def test_lp_norm():
    d = _dom(4, 0.5)
    f = ScalarField(d, np.full((4, 4), 2.0))
    assert lp_norm(f, 1) == pytest.approx(2.0 * 16 * 0.25)
    assert lp_norm(f, 2) == pytest.approx(math.sqrt(4 * 16 * 0.25))
    assert lp_norm(f, math.inf) == 2.0
    with pytest.warns(EmptyRegionWarning):
        assert lp_norm(f, 2, BinaryMask.empty(d)) == 0.0
    with pytest.raises(ConfigurationError):
        ScalarField(d, np.full((4, 4), np.nan))


def test_io_roundtrip(tmp_path):
    d = GridDomain((5, 6, 7), 0.25, (1.0, -1.0, 0.0))
    rng = np.random.default_rng(0)
    m = BinaryMask(d, rng.random(d.counts) < 0.4)
    io.save_mask(tmp_path / "m.pbm", m)
    assert io.load_mask(tmp_path / "m.pbm") == m
    f = ScalarField(d, rng.normal(size=d.counts), "1/length")
    io.save_field(tmp_path / "f.f64", f)
    g = io.load_field(tmp_path / "f.f64")
    assert g.domain == d and np.array_equal(g.values, f.values) and g.unit == "1/length"


def test_io_errors_name_the_path(tmp_path):
    with pytest.raises(ConfigurationError, match="nope.pbm"):
        io.load_mask(tmp_path / "nope.pbm")
    d = _dom(4)
    io.save_mask(tmp_path / "m.pbm", BinaryMask.empty(d))
    io.sidecar_path(tmp_path / "m.pbm").write_text("{broken")
    with pytest.raises(ConfigurationError, match="malformed"):
        io.load_mask(tmp_path / "m.pbm")
    io.save_field(tmp_path / "f.f64", ScalarField.constant(d, 1.0))
    with pytest.raises(ConfigurationError):
        io.load_mask(tmp_path / "f.f64")
