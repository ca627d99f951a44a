import warnings

import numpy as np
import pytest

from vmclab._validation import ConfigurationError, DomainMismatchError
from vmclab.barozzi import (LambdaSchedule, UncoveredCellsWarning, barozzi_curvature, barozzi_field,
                            complement_box, compose_curvature, inscribed_radius, lambda_sweep,
                            solve_cp)
from vmclab.grid import Ball, BinaryMask, GridDomain, Predicate, ScalarField, lp_norm, perimeter, rasterize


@pytest.fixture(scope="module")
def disk():
    d = GridDomain.from_bounds([0, 0], [1, 1], 96)
    return rasterize(Ball((0.5, 0.5), 0.3), d)


def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        LambdaSchedule(())
    with pytest.raises(ConfigurationError):
        LambdaSchedule((1.0, 1.0))
    with pytest.raises(ConfigurationError):
        LambdaSchedule((-1.0, 2.0))
    s = LambdaSchedule.geometric(1, 16, 5)
    assert s.ratio == pytest.approx(2.0) and len(s) == 5


def test_small_lambda_gives_empty_set_and_large_gives_E(disk):
    assert solve_cp(disk, None, 0.5).count == 0
    assert solve_cp(disk, None, 2 / 0.3 * 1.2) == disk


def test_sweep_is_nested_and_covers(disk):
    sw = lambda_sweep(disk, None, LambdaSchedule.default(disk.domain, 24))
    masks = sw.masks
    for a, b in zip(masks, masks[1:]):
        assert a.issubset(b)
    assert sw.uncovered.count == 0
    assert masks[-1] == disk


def test_disk_curvature_is_n_over_r(disk):
    sw = lambda_sweep(disk, None, LambdaSchedule.default(disk.domain, 32), refine_jump=0.02)
    H, unc = barozzi_curvature(sw)
    assert unc.count == 0
    vals = H.values[disk.bits]
    assert np.median(vals) == pytest.approx(2 / 0.3, rel=0.05)
    assert lp_norm(H, 1, disk) == pytest.approx(perimeter(disk), rel=0.05)


def test_refinement_meets_target_ratio(disk):
    sw = lambda_sweep(disk, None, LambdaSchedule.default(disk.domain, 8), refine_jump=0.01, min_ratio=1.05)
    v = np.asarray(sw.schedule.values)
    cov = [m.count for m in sw.masks]
    big = np.diff(cov) > 0.01 * disk.count
    assert np.all(v[1:][big] / v[:-1][big] < 1.05 + 1e-12)


def test_uncovered_cells_warn():
    d = GridDomain.from_bounds([0, 0], [1, 1], 48)
    E = rasterize(Ball((0.5, 0.5), 0.3), d)
    sw = lambda_sweep(E, None, LambdaSchedule.geometric(0.5, 2.0, 3))
    with pytest.warns(UncoveredCellsWarning):
        _, unc = barozzi_curvature(sw)
    assert unc == E


def test_complement_box_and_field():
    d = GridDomain.from_bounds([0, 0], [1, 1], 48)
    E = rasterize(Ball((0.5, 0.5), 0.25), d)
    bd, Eb, (src, dst) = complement_box(E)
    assert bd.h == d.h and Eb.count == E.count
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = barozzi_field(E, num=32)
    inside = res.curvature.values[E.bits & res.valid.bits]
    outside = res.curvature.values[~E.bits & res.valid.bits]
    assert np.all(inside > 0)
    assert np.all(outside <= 1e-12)


def test_compose_curvature():
    d = GridDomain.from_bounds([0, 0], [1, 1], 8)
    E = BinaryMask(d, np.arange(64).reshape(8, 8) % 2 == 0)
    U = BinaryMask(d, np.ones((8, 8), bool)).__and__(np.add.outer(range(8), range(8)) < 10)
    H = compose_curvature(ScalarField.constant(d, 1), ScalarField.constant(d, -2), E, U)
    assert np.all(H.values[E.bits & U.bits] == 1)
    assert np.all(H.values[~E.bits & U.bits] == -2)
    assert np.all(H.values[~U.bits] == 0)
    with pytest.raises(DomainMismatchError):
        compose_curvature(ScalarField.constant(GridDomain((8, 8), 2.0, (0, 0)), 1),
                          ScalarField.constant(d, 1), E, U)


def test_inscribed_radius_on_disk():
    d = GridDomain.from_bounds([0, 0], [1, 1], 48)
    E = rasterize(Ball((0.5, 0.5), 0.3), d)
    rho = inscribed_radius(E)
    assert rho[E.bits].max() == pytest.approx(0.3, abs=2 * d.h)
    # isolated rim pixels only admit small balls
    assert np.quantile(rho[E.bits], 0.05) > 0.2


@pytest.mark.parametrize("seed", range(4))
def test_banded_sweep_matches_full_solves(seed):
    rng = np.random.default_rng(seed)
    d = GridDomain.from_bounds([0, 0], [1, 1], 40)
    E = rasterize(Ball((0.5, 0.5), 0.35), d) - rasterize(Ball(tuple(rng.uniform(0.3, 0.7, 2)), 0.12), d)
    hE = ScalarField(d, rng.uniform(0.5, 2.0, d.counts))
    sched = LambdaSchedule.default(d, 20)
    a = lambda_sweep(E, hE, sched, refine_jump=0.05)
    b = lambda_sweep(E, hE, sched, refine_jump=0.05, banded=False)
    Ha, _ = barozzi_curvature(a, warn=False)
    Hb, _ = barozzi_curvature(b, warn=False)
    assert np.array_equal(Ha.values, Hb.values)
