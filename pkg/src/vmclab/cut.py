"""Exact minimization of the discrete Massari functional by min-cut.

The energy of a competitor F that agrees with the datum E outside the
free cells U is

    P(F; U + ring) - sum_{F cap U} H h^n,

a sum of submodular pairwise terms and unary terms, so a single s-t
minimum cut yields a global minimizer.  Cells in F sit on the sink side;
unreached nodes default to the source side, which selects the smallest
minimizer.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import maxflow
import numpy as np

from ._validation import ConfigurationError, DomainMismatchError
from .grid import (
    BinaryMask,
    GridDomain,
    PerimeterWeights,
    ScalarField,
    boundary_cells,
    dilate,
    pair_slices,
    perimeter,
    perimeter_array,
    resolve_weights,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CutProblem:
    """Massari minimization instance: flips allowed on ``free`` only."""

    curvature: ScalarField
    datum: BinaryMask
    free: BinaryMask
    weights: Optional[PerimeterWeights] = None

    def __post_init__(self):
        d = self.datum.domain
        if self.curvature.domain != d or self.free.domain != d:
            raise DomainMismatchError("curvature, datum and free region must share a domain")
        w = resolve_weights(self.weights, d.n)
        object.__setattr__(self, "weights", w)
        r = w.radius
        bits = self.free.bits
        for ax in range(d.n):
            lo = np.take(bits, range(min(r, d.counts[ax])), axis=ax)
            hi = np.take(bits, range(max(d.counts[ax] - r, 0), d.counts[ax]), axis=ax)
            if lo.any() or hi.any():
                raise ConfigurationError(
                    f"free region reaches within {r} cells of the domain boundary on axis {ax}; "
                    "no frozen ring fits")

    @property
    def domain(self) -> GridDomain:
        return self.datum.domain

    def energy_region(self) -> BinaryMask:
        """Free cells plus their stencil ring: every pair touching U lies inside."""
        return dilate(self.free, self.weights)


@dataclass(frozen=True, eq=False)
class CutSolution:
    mask: BinaryMask
    energy: float
    perimeter_part: float
    bulk_part: float
    stats: dict = field(default_factory=dict)


def massari_energy(F: BinaryMask, problem: CutProblem) -> tuple:
    """(energy, perimeter part, bulk part) of a competitor."""
    if F.domain != problem.domain:
        raise DomainMismatchError("competitor lives on a different domain")
    per = perimeter(F, problem.energy_region(), problem.weights)
    sel = F.bits & problem.free.bits
    bulk = float(np.sum(problem.curvature.values[sel])) * problem.domain.cell_volume
    return per - bulk, per, bulk


def _window(bits, r):
    idx = np.nonzero(bits)
    sl = []
    for ax, ii in enumerate(idx):
        sl.append(slice(max(int(ii.min()) - r, 0), min(int(ii.max()) + r + 1, bits.shape[ax])))
    return tuple(sl)


def _quantum(problem: CutProblem, sl, Fw):
    """Integer resolution: fine relative to the largest term, with no int64 overflow.

    The quantum is a power of two, so dyadic inputs quantize exactly and
    exact ties between competitors survive.
    """
    d = problem.domain
    w = problem.weights
    c_max = max(w.weights) * d.h ** (d.n - 1)
    h_abs = np.abs(problem.curvature.values[sl][Fw]) * d.cell_volume
    k = int(Fw.sum())
    big = max(c_max, float(h_abs.max(initial=0.0)))
    total = float(h_abs.sum()) + 4.0 * k * sum(w.weights) * d.h ** (d.n - 1)
    q = max(total / 2.0 ** 60, big * 2.0 ** -50)
    return 2.0 ** math.ceil(math.log2(q)) if q > 0 else 1.0


def _build_terms(problem: CutProblem):
    """Integer unary costs (u0, u1) per free node and pairwise (i, j, c) on a cropped window.

    Every elementary term is rounded once before accumulation, so equal
    float energies built from the same terms stay equal after scaling.
    """
    d = problem.domain
    w = problem.weights
    sl = _window(problem.free.bits, w.radius)
    Fw = problem.free.bits[sl]
    Ew = problem.datum.bits[sl]
    Hw = problem.curvature.values[sl]
    q = _quantum(problem, sl, Fw)
    k = int(Fw.sum())
    idx = np.full(Fw.shape, -1, dtype=np.int64)
    idx[Fw] = np.arange(k)
    u0 = np.zeros(k, dtype=np.int64)
    u1 = -np.rint(Hw[Fw] * d.cell_volume / q).astype(np.int64)
    I, J, C = [], [], []
    scale = d.h ** (d.n - 1)
    for off, wt in zip(w.offsets, w.weights):
        ps = pair_slices(Fw.shape, off)
        if ps is None:
            continue
        lo, hi = ps
        c = int(np.rint(wt * scale / q))
        fa, fb = Fw[lo], Fw[hi]
        ia, ib = idx[lo], idx[hi]
        both = fa & fb
        if both.any():
            I.append(ia[both])
            J.append(ib[both])
            C.append(np.full(int(both.sum()), c, dtype=np.int64))
        for free_side, other_in, node in ((fa & ~fb, Ew[hi], ia), (fb & ~fa, Ew[lo], ib)):
            if not free_side.any():
                continue
            nodes = node[free_side]
            inside = other_in[free_side]
            # frozen neighbor inside: pay when the free cell is out, and vice versa
            np.add.at(u0, nodes[inside], c)
            np.add.at(u1, nodes[~inside], c)
    if I:
        I, J, C = np.concatenate(I), np.concatenate(J), np.concatenate(C)
    else:
        I = J = C = np.zeros(0, dtype=np.int64)
    return sl, Fw, q, u0, u1, I, J, C


def minimize_massari(problem: CutProblem) -> CutSolution:
    """Smallest global minimizer of the discrete Massari energy."""
    d = problem.domain
    if not problem.free.any():
        e, per, bulk = massari_energy(problem.datum, problem)
        return CutSolution(problem.datum, e, per, bulk, {"nodes": 0, "arcs": 0, "maxflow": 0.0})
    sl, Fw, q, u0, u1, I, J, C = _build_terms(problem)
    diff = u1 - u0
    cap = C
    k = u0.size
    g = maxflow.GraphInt(k, I.size)
    g.add_nodes(k)
    if I.size:
        g.add_edges(I, J, cap, cap)
    # x = 1 (sink side) costs the source arc, x = 0 costs the sink arc
    g.add_grid_tedges(np.arange(k), np.maximum(diff, 0), np.maximum(-diff, 0))
    flow = g.maxflow()
    x = g.get_grid_segments(np.arange(k))
    bits = problem.datum.bits.copy()
    sub = bits[sl]
    sub[Fw] = x
    bits[sl] = sub
    F = BinaryMask(d, bits)
    e, per, bulk = massari_energy(F, problem)
    stats = {"nodes": int(k), "arcs": int(2 * I.size + 2 * k),
             "maxflow": float(flow) * q, "quantum": q}
    log.debug("min-cut: %d nodes, %d pair arcs, energy %.6g", k, I.size, e)
    return CutSolution(F, e, per, bulk, stats)


def xi(E: BinaryMask, U_free: BinaryMask, weights=None):
    """Least perimeter with boundary datum E in U; returns (value, minimizer)."""
    zero = ScalarField.constant(E.domain, 0.0)
    prob = CutProblem(zero, E, U_free, weights)
    sol = minimize_massari(prob)
    return sol.perimeter_part, sol.mask


def psi(E: BinaryMask, U_free: BinaryMask, weights=None) -> float:
    """Deviation from perimeter minimality, P(E; U + ring) - Xi(E, U), clipped at 0."""
    weights = resolve_weights(weights, E.domain.n)
    value, _ = xi(E, U_free, weights)
    own = perimeter(E, dilate(U_free, weights), weights)
    dev = own - value
    # float accumulation only; the minimizer can never beat E by a negative amount
    return max(dev, 0.0)


# --------------------------------------------------------------------------
# perturbation check


@dataclass
class MinimalityReport:
    n_tested: int
    max_improvement: float
    slack: float
    worst_kind: str = ""
    kinds: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_improvement <= self.slack

    def to_dict(self):
        return {"n_tested": self.n_tested, "max_improvement": self.max_improvement,
                "slack": self.slack, "passed": self.passed, "worst_kind": self.worst_kind,
                "kinds": self.kinds}


def energy_change(F: np.ndarray, flips: tuple, H: np.ndarray, h: float, weights) -> float:
    """Energy change when the cells listed in ``flips`` (index arrays) are toggled.

    Only pairs touching a flipped cell change state; they all live inside
    the bounding box of the flips grown by the stencil radius.
    """
    r = weights.radius
    sl = tuple(slice(max(int(ii.min()) - r, 0), min(int(ii.max()) + r + 1, F.shape[ax]))
               for ax, ii in enumerate(flips))
    before = F[sl]
    after = before.copy()
    local = tuple(ii - s.start for ii, s in zip(flips, sl))
    after[local] = ~after[local]
    dper = perimeter_array(after, h, weights) - perimeter_array(before, h, weights)
    sign = np.where(after[local], 1.0, -1.0)
    dbulk = float(np.sum(sign * H[flips])) * h ** F.ndim
    return dper - dbulk


def _ball_offsets(n, radius):
    r = int(np.ceil(radius))
    g = np.indices((2 * r + 1,) * n).reshape(n, -1).T - r
    return g[np.sum(g ** 2, axis=1) <= radius ** 2]


def random_perturbations(E: BinaryMask, U_free: BinaryMask, n_perturbations=1000,
                         max_radius=6, seed=0):
    """Yield (kind, flip index tuple) for random local competitors inside U_free."""
    rng = np.random.default_rng(seed)
    bits, free = E.bits, U_free.bits
    n = bits.ndim
    free_idx = np.argwhere(free)
    edge = boundary_cells(E).bits | boundary_cells(E.complement()).bits
    near_idx = np.argwhere(edge & free)
    if free_idx.size == 0:
        return
    kinds = ("fill", "clear", "random", "shift", "cell")
    produced = 0
    attempts = 0
    while produced < n_perturbations and attempts < 50 * n_perturbations:
        attempts += 1
        pool = near_idx if (near_idx.size and rng.random() < 0.8) else free_idx
        c = pool[rng.integers(len(pool))]
        kind = kinds[rng.integers(len(kinds))]
        if kind == "cell":
            pts = c[None, :]
        else:
            pts = c + _ball_offsets(n, rng.uniform(1.0, max_radius))
        ok = np.all((pts >= 0) & (pts < np.asarray(bits.shape)), axis=1)
        pts = pts[ok]
        pts = pts[free[tuple(pts.T)]]
        if len(pts) == 0:
            continue
        cur = bits[tuple(pts.T)]
        if kind == "fill":
            sel = ~cur
        elif kind == "clear":
            sel = cur
        elif kind == "random":
            sel = rng.random(len(pts)) < 0.5
        elif kind == "shift":
            step = np.zeros(n, dtype=int)
            step[rng.integers(n)] = rng.choice((-1, 1))
            src = np.clip(pts - step, 0, np.asarray(bits.shape) - 1)
            sel = bits[tuple(src.T)] != cur
        else:
            sel = np.ones(1, dtype=bool)
        if not sel.any():
            continue
        produced += 1
        yield kind, tuple(pts[sel].T)


def verify_minimality(E: BinaryMask, H: ScalarField, U_free: BinaryMask, weights=None,
                      n_perturbations=1000, seed=0, slack=0.0, max_radius=6) -> MinimalityReport:
    """Largest energy decrease over random local competitors differing from E inside U_free."""
    if H.domain != E.domain or U_free.domain != E.domain:
        raise DomainMismatchError("set, curvature and region must share a domain")
    weights = resolve_weights(weights, E.domain.n)
    best, worst_kind, count = -np.inf, "", 0
    kinds = {}
    for kind, flips in random_perturbations(E, U_free, n_perturbations, max_radius, seed):
        gain = -energy_change(E.bits, flips, H.values, E.domain.h, weights)
        count += 1
        kinds[kind] = max(kinds.get(kind, -np.inf), gain)
        if gain > best:
            best, worst_kind = gain, kind
    if count == 0:
        best = 0.0
    return MinimalityReport(count, float(best), float(slack), worst_kind, kinds)
