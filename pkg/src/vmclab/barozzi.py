"""Optimal variational curvature of a set from a nested family of penalized minimizers.

For each scheduled lambda the smallest minimizer E_lambda of

    P(F) + lambda * sum_{E \\ F} h_E h^n,   F subset of E,

is computed by min-cut.  The curvature at a cell is the first scheduled
lambda whose minimizer contains it, times h_E.  The complement is handled
by the same construction on a padded box around E, with a minus sign.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._validation import ConfigurationError, DomainMismatchError, check_positive
from .cut import CutProblem, minimize_massari
from .grid import BinaryMask, GridDomain, ScalarField, resolve_weights

log = logging.getLogger(__name__)


class NestednessError(RuntimeError):
    """A later minimizer of the sweep fails to contain an earlier one."""


class UncoveredCellsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LambdaSchedule:
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigurationError("lambda schedule is empty")
        if vals[0] <= 0 or not all(math.isfinite(v) for v in vals):
            raise ConfigurationError("lambda values must be positive and finite")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigurationError("lambda schedule must be strictly increasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def geometric(cls, lo, hi, num):
        if num == 1:
            return cls((float(lo),))
        return cls(tuple(np.geomspace(lo, hi, int(num))))

    @classmethod
    def default(cls, domain: GridDomain, num: int = 64, top_factor: float = 1.0):
        """n / (half domain diagonal) up to top_factor * n / (2h), geometric."""
        half_diag = 0.5 * float(np.linalg.norm(domain.extent))
        lo = domain.n / half_diag
        hi = top_factor * domain.n / (2.0 * domain.h)
        return cls.geometric(lo, hi, num)

    @property
    def ratio(self) -> float:
        """Largest ratio between consecutive values (1 for a single value)."""
        v = np.asarray(self.values)
        return float(np.max(v[1:] / v[:-1])) if len(v) > 1 else 1.0

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class LambdaSweep:
    """Nested minimizers stored compactly as the first covering schedule index per cell."""

    schedule: LambdaSchedule
    E: BinaryMask
    weight: ScalarField
    first_index: np.ndarray
    n_solved: int
    stats: list = field(default_factory=list)

    def mask(self, k: int) -> BinaryMask:
        if not 0 <= k < self.n_solved:
            raise IndexError(f"sweep holds {self.n_solved} solved levels")
        return BinaryMask(self.E.domain, (self.first_index >= 0) & (self.first_index <= k))

    @property
    def masks(self):
        return [self.mask(k) for k in range(self.n_solved)]

    @property
    def uncovered(self) -> BinaryMask:
        return BinaryMask(self.E.domain, self.E.bits & (self.first_index < 0))


def _check_weight(E, h_E):
    if h_E is None:
        return ScalarField.constant(E.domain, 1.0)
    if h_E.domain != E.domain:
        raise DomainMismatchError("weight field and set live on different domains")
    if np.any(h_E.values[E.bits] <= 0):
        raise ConfigurationError("weight h_E must be positive on E")
    return h_E


def _padded(E: BinaryMask, r: int, extra=None):
    """Embed E (and an aligned field) in a domain grown by r empty cells per side."""
    d = E.domain
    pd = GridDomain(tuple(c + 2 * r for c in d.counts), d.h, tuple(o - r * d.h for o in d.origin))
    bits = np.pad(E.bits, r)
    vals = None if extra is None else np.pad(extra, r)
    return pd, bits, vals


def solve_cp(E: BinaryMask, h_E: Optional[ScalarField], lam: float, weights=None) -> BinaryMask:
    """Smallest minimizer of P(F) + lam * sum_{E minus F} h_E h^n over F inside E.

    The perimeter is taken in the whole space: E is padded with empty cells
    so that cells on the domain edge still pay for their outer faces.
    """
    lam = check_positive("lambda", lam)
    h_E = _check_weight(E, h_E)
    weights = resolve_weights(weights, E.domain.n)
    return _solve_cp(E, h_E, lam, weights)[0]


def _solve_cp(E, h_E, lam, weights, inside=None, allowed=None):
    """Solve on the padded domain; ``inside`` cells are fixed in, cells off ``allowed`` fixed out."""
    r = weights.radius
    pd, bits, hv = _padded(E, r, np.where(E.bits, h_E.values, 0.0))
    datum = np.zeros(pd.counts, dtype=bool) if inside is None else np.pad(inside, r)
    free = bits & ~datum
    if allowed is not None:
        free &= np.pad(allowed, r)
    prob = CutProblem(ScalarField(pd, lam * hv), BinaryMask(pd, datum), BinaryMask(pd, free), weights)
    sol = minimize_massari(prob)
    inner = tuple(slice(r, r + c) for c in E.domain.counts)
    return BinaryMask(E.domain, sol.mask.bits[inner]), sol.stats


def lambda_sweep(E: BinaryMask, h_E: Optional[ScalarField] = None,
                 schedule: Optional[LambdaSchedule] = None, weights=None,
                 tol: float = 0.0, refine_jump: Optional[float] = None,
                 min_ratio: float = 1.01, banded: bool = True) -> LambdaSweep:
    """Smallest minimizers along the schedule.

    With ``refine_jump`` set, any schedule interval over which more than
    that fraction of E becomes covered is bisected geometrically until its
    ratio drops below ``min_ratio``.

    Smallest minimizers grow with lambda, so with ``banded`` each solve only
    frees the cells between the minimizers of its solved neighbors; the
    result is the same smallest minimizer at a fraction of the cost.  With
    ``banded=False`` the schedule is walked upward on all of E, stopping once
    at most ``tol`` of E is uncovered, and nestedness against both neighbors
    is checked instead.
    """
    h_E = _check_weight(E, h_E)
    weights = resolve_weights(weights, E.domain.n)
    if schedule is None:
        schedule = LambdaSchedule.default(E.domain)
    first = np.full(E.domain.counts, np.inf)
    total = max(E.count, 1)
    stats = []
    solved = []

    def run(lam, lo=None, hi=None):
        inside = allowed = None
        if banded:
            inside = first <= lo if lo is not None else None
            allowed = first <= hi if hi is not None else None
        F, st = _solve_cp(E, h_E, lam, weights, inside, allowed)
        below = first <= lo if lo is not None else None
        if below is not None and np.any(below & ~F.bits):
            raise NestednessError(
                f"minimizer at lambda={lam:.6g} misses {int(np.sum(below & ~F.bits))} cells "
                f"of the one at lambda={lo:.6g}")
        if hi is not None and np.any(F.bits & (first > hi)):
            raise NestednessError(
                f"minimizer at lambda={lam:.6g} is not inside the one at lambda={hi:.6g}")
        first[F.bits & (first > lam)] = lam
        solved.append(lam)
        stats.append(dict(st, **{"lambda": lam, "cells": int(F.count)}))
        log.debug("lambda %.5g: %d of %d cells", lam, F.count, E.count)

    vals = schedule.values
    if banded:
        # divide and conquer: every solve is bracketed by two solved levels
        run(vals[-1])
        if len(vals) > 1:
            run(vals[0], hi=vals[-1])
        stack = [(0, len(vals) - 1)]
        while stack:
            i, j = stack.pop()
            if j - i < 2:
                continue
            m = (i + j) // 2
            run(vals[m], lo=vals[i], hi=vals[j])
            stack += [(i, m), (m, j)]
    else:
        prev = None
        for lam in vals:
            run(lam, lo=prev)
            prev = lam
            if np.count_nonzero(E.bits & ~np.isfinite(first)) <= tol * total:
                break

    if refine_jump is not None:
        pending = sorted(solved)
        pending = list(zip(pending, pending[1:]))
        while pending:
            lo, hi = pending.pop()
            if hi / lo < min_ratio:
                continue
            jump = np.count_nonzero((first > lo) & (first <= hi))
            if jump <= refine_jump * total:
                continue
            mid = math.sqrt(lo * hi)
            run(mid, lo=lo, hi=hi)
            pending += [(lo, mid), (mid, hi)]

    vals = np.asarray(sorted(solved))
    idx = np.full(E.domain.counts, -1, dtype=np.int32)
    cov = np.isfinite(first)
    idx[cov] = np.searchsorted(vals, first[cov])
    stats.sort(key=lambda st: st["lambda"])
    return LambdaSweep(LambdaSchedule(tuple(vals)), E, h_E, idx, len(vals), stats)


def barozzi_curvature(sweep: LambdaSweep, warn: bool = True):
    """Curvature on E from a sweep; returns (field, uncovered mask).

    The field is 0 off E and on uncovered cells; uncovered cells should be
    excluded from norms (pass ``E - uncovered`` as the region).
    """
    if sweep.n_solved == 0:
        raise ConfigurationError("empty sweep")
    lam = np.asarray(sweep.schedule.values)
    fi = sweep.first_index
    covered = fi >= 0
    vals = np.zeros(sweep.E.domain.counts)
    vals[covered] = lam[fi[covered]] * sweep.weight.values[covered]
    unc = sweep.uncovered
    if warn and unc.any():
        warnings.warn(f"{unc.count} cells of E never covered by the sweep", UncoveredCellsWarning,
                      stacklevel=2)
    return ScalarField(sweep.E.domain, vals, "1/length"), unc


def complement_box(E: BinaryMask, pad_fraction: float = 0.25, weights=None):
    """Domain around E's bounding box grown by pad_fraction per side, with E embedded."""
    d = E.domain
    weights = resolve_weights(weights, d.n)
    idx = np.nonzero(E.bits)
    if not idx[0].size:
        raise ConfigurationError("cannot build a complement box around an empty set")
    lo = np.array([int(i.min()) for i in idx])
    hi = np.array([int(i.max()) + 1 for i in idx])
    pad = np.ceil(pad_fraction * (hi - lo)).astype(int) + weights.radius
    blo, bhi = lo - pad, hi + pad
    bd = GridDomain(tuple(bhi - blo), d.h, tuple(np.asarray(d.origin) + blo * d.h))
    # copy E into the box; box cells outside the original domain are outside E
    bits = np.zeros(bd.counts, dtype=bool)
    src = tuple(slice(max(l, 0), min(u, c)) for l, u, c in zip(blo, bhi, d.counts))
    dst = tuple(slice(s.start - l, s.stop - l) for s, l in zip(src, blo))
    bits[dst] = E.bits[src]
    return bd, BinaryMask(bd, bits), (src, dst)


@dataclass(frozen=True, eq=False)
class BarozziResult:
    curvature: ScalarField
    uncovered: BinaryMask
    sweep: LambdaSweep
    complement_sweep: Optional[LambdaSweep] = None

    @property
    def valid(self) -> BinaryMask:
        return self.uncovered.complement()


def barozzi_field(E: BinaryMask, h_E: Optional[ScalarField] = None, schedule=None, weights=None,
                  num: int = 64, top_factor: float = 1.0, complement: bool = True,
                  pad_fraction: float = 0.25, tol: float = 0.0,
                  refine_jump: Optional[float] = None, min_ratio: float = 1.01) -> BarozziResult:
    """H_E on E and, optionally, minus the complement's curvature off E.

    ``schedule`` defaults to the geometric schedule of the domain; the
    complement uses the schedule of its own padded box with the same
    number of points.  The uncovered mask collects cells missed on either side.
    """
    weights = resolve_weights(weights, E.domain.n)
    sched = schedule or LambdaSchedule.default(E.domain, num, top_factor)
    sw = lambda_sweep(E, h_E, sched, weights, tol, refine_jump, min_ratio)
    H, unc = barozzi_curvature(sw, warn=False)
    vals = H.values.copy()
    unc_bits = unc.bits.copy()
    csw = None
    if complement:
        bd, Eb, (src, dst) = complement_box(E, pad_fraction, weights)
        C = Eb.complement()
        csched = schedule or LambdaSchedule.default(bd, num, top_factor)
        csw = lambda_sweep(C, None, csched, weights, tol, refine_jump, min_ratio)
        HC, uncC = barozzi_curvature(csw, warn=False)
        off = ~E.bits
        inner = np.zeros(E.domain.counts, dtype=bool)
        inner[src] = True
        cvals = np.zeros(E.domain.counts)
        cvals[src] = HC.values[dst]
        cunc = np.zeros(E.domain.counts, dtype=bool)
        cunc[src] = uncC.bits[dst]
        vals[off] = -cvals[off]
        # complement cells of the domain that fall outside the box
        unc_bits |= off & (cunc | ~inner)
    if unc_bits.any():
        warnings.warn(f"{int(unc_bits.sum())} cells never covered by the sweep",
                      UncoveredCellsWarning, stacklevel=2)
    return BarozziResult(ScalarField(E.domain, vals, "1/length"), BinaryMask(E.domain, unc_bits), sw, csw)


def compose_curvature(H1: ScalarField, H2: ScalarField, E: BinaryMask, U_free: BinaryMask) -> ScalarField:
    """H1 on E inside U, H2 on U outside E, zero outside U."""
    d = E.domain
    if H1.domain != d or H2.domain != d or U_free.domain != d:
        raise DomainMismatchError("curvatures, set and region must share a domain")
    vals = np.where(E.bits, H1.values, H2.values) * U_free.bits
    return ScalarField(d, vals, H1.unit or H2.unit)


def inscribed_radius(E: BinaryMask) -> np.ndarray:
    """Per cell of E, the largest radius rho with the cell in some rasterized ball B_rho inside E.

    Computed from the Euclidean distance transform: a ball centered at z
    with radius dist(z) fits; the cell inherits the largest such radius
    among centers whose ball reaches it.  Brute force over centers, so use
    on moderate grids.
    """
    from scipy import ndimage

    d = E.domain
    dist = ndimage.distance_transform_edt(E.bits) * d.h - 0.5 * d.h
    X = d.centers().reshape(-1, d.n)
    flat = dist.ravel()
    order = np.argsort(-flat)
    rho = np.zeros(flat.size)
    done = np.zeros(flat.size, dtype=bool)
    inside = E.bits.ravel()
    for z in order:
        r = flat[z]
        if r <= 0:
            break
        sel = inside & ~done & (np.sum((X - X[z]) ** 2, axis=1) < r ** 2)
        rho[sel] = r
        done |= sel
        if done[inside].all():
            break
    return rho.reshape(d.counts)
