"""Hölder exponents: the improvement iteration, Ψ-decay fits and constant estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from ._validation import ConfigurationError
from .cut import psi
from .grid import Ball, BinaryMask, rasterize, resolve_weights


@dataclass(frozen=True)
class ExponentParams:
    n: int
    p: float
    tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if int(self.n) < 2:
            raise ConfigurationError("n must be >= 2")
        p = float(self.p)
        if not p > self.n:
            raise ConfigurationError(f"need p > n, got p={p} for n={self.n}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "n", int(self.n))

    @property
    def alpha0(self) -> float:
        """Starting exponent (1 - n/p)/4, which is 1/4 for p = inf."""
        return 0.25 if math.isinf(self.p) else 0.25 * (1.0 - self.n / self.p)

    @property
    def fixed_point(self) -> float:
        return 1.0 if math.isinf(self.p) else (self.p - self.n) / (self.p + 1.0)

    @property
    def contraction(self) -> float:
        return 0.5 if math.isinf(self.p) else 0.5 * (1.0 - 1.0 / self.p)

    def g(self, s: float) -> float:
        if math.isinf(self.p):
            return 0.5 * s + 0.5
        return 0.5 * (1.0 - 1.0 / self.p) * s + (self.p - self.n) / (2.0 * self.p)


@dataclass
class ExponentReport:
    iterates: list = field(default_factory=list)
    fixed_point: Optional[float] = None
    converged: bool = False
    radii: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None
    slope: Optional[float] = None
    intercept: Optional[float] = None
    implied_alpha: Optional[float] = None
    r2: Optional[float] = None
    flags: list = field(default_factory=list)

    def to_dict(self):
        out = {"iterates": list(self.iterates), "fixed_point": self.fixed_point,
               "converged": self.converged, "slope": self.slope, "intercept": self.intercept,
               "implied_alpha": self.implied_alpha, "r2": self.r2, "flags": list(self.flags)}
        if self.radii is not None:
            out["radii"] = [float(r) for r in self.radii]
            out["psi"] = [float(v) for v in self.psi]
        return out


def iterate_exponent(params: ExponentParams) -> ExponentReport:
    """alpha_k = g(alpha_{k-1}) from alpha0 until within tol of the fixed point."""
    star = params.fixed_point
    a = params.alpha0
    its = [a]
    converged = abs(a - star) < params.tol
    while not converged and len(its) <= params.max_iter:
        a = params.g(a)
        its.append(a)
        converged = abs(a - star) < params.tol
    return ExponentReport(iterates=its, fixed_point=star, converged=converged)


def _fit_line(x, y):
    slope, intercept, _, _ = stats.theilslopes(y, x)
    resid = y - (intercept + slope * x)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), r2


def psi_decay_fit(E: BinaryMask, center, radii: Sequence[float], weights=None,
                  min_cells: float = 8.0) -> ExponentReport:
    """Ψ(E, B_r(center)) for each radius and the Theil-Sen slope of log Ψ against log r.

    The implied exponent is (slope - (n - 1))/2.  Zero values mark exact
    minimizers and are left out of the fit; with fewer than three positive
    values no slope is reported and the flags say why.
    """
    d = E.domain
    weights = resolve_weights(weights, d.n)
    radii = np.asarray(sorted(float(r) for r in radii))
    if radii.size < 3:
        raise ConfigurationError("need at least 3 radii")
    if radii[0] < min_cells * d.h * (1 - 1e-9):
        raise ConfigurationError(f"radii must span at least {min_cells} cells")
    flags = []
    if radii[-1] / radii[0] < 4.0 - 1e-9:
        flags.append("radii span fewer than 3 dyadic levels")
    vals = []
    for r in radii:
        U = rasterize(Ball(center, r), d)
        if U.meta.get("clipped"):
            raise ConfigurationError(f"ball of radius {r} leaves the domain")
        vals.append(psi(E, U, weights))
    vals = np.asarray(vals)
    # Psi below float accumulation noise counts as exact
    noise = 1e-9 * max(1.0, float(np.max(vals)))
    pos = vals > noise
    rep = ExponentReport(radii=radii, psi=vals, flags=flags)
    if not pos.any():
        rep.flags.append("exact minimizer")
        return rep
    if (~pos).any():
        rep.flags.append(f"exact minimizer at {int((~pos).sum())} radii")
    if pos.sum() < 3:
        rep.flags.append("too few positive radii to fit")
        return rep
    x, y = np.log(radii[pos]), np.log(vals[pos])
    rep.slope, rep.intercept, rep.r2 = _fit_line(x, y)
    rep.implied_alpha = (rep.slope - (d.n - 1)) / 2.0
    return rep


# --------------------------------------------------------------------------
# Hölder constants from samples


@dataclass
class HolderFit:
    alpha: float
    constant: float
    slope: Optional[float]
    scales: np.ndarray
    envelope: np.ndarray


def _pairs(m, max_pairs, seed):
    total = m * (m - 1) // 2
    if total <= max_pairs:
        i, j = np.triu_indices(m, 1)
        return i, j
    rng = np.random.default_rng(seed)
    i = rng.integers(0, m, max_pairs)
    j = rng.integers(0, m, max_pairs)
    keep = i != j
    return i[keep], j[keep]


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def pair_differences(points, values, max_pairs=2_000_000, seed=0):
    """Distances and value differences over all (or a seeded subset of) sample pairs."""
    X = _as_points(points)
    G = _as_points(values)
    i, j = _pairs(len(X), max_pairs, seed)
    dist = np.linalg.norm(X[i] - X[j], axis=1)
    diff = np.linalg.norm(G[i] - G[j], axis=1)
    keep = dist > 0
    return dist[keep], diff[keep]


def holder_fit(points, values, alpha_step: float = 0.01, n_bins: int = 24,
               max_pairs: int = 2_000_000, seed: int = 0, scale_fraction: float = 0.5) -> HolderFit:
    """Exponent and constant of a sampled map from the scaling of its oscillation.

    Pairs are grouped in log-spaced separation bins; in each bin the largest
    difference M_b is kept.  Only the smallest ``scale_fraction`` of the
    log-separation range enters the fit, since at large separations the
    oscillation of any bounded map saturates.  The exponent is the grid
    value minimizing the least-squares misfit of log M_b - a log d_b and
    the constant is the largest ratio over pairs in the fitted range.  Zero
    oscillation gives exponent 1 and constant 0.
    """
    if not 0 < scale_fraction <= 1:
        raise ConfigurationError("scale_fraction must lie in (0, 1]")
    dist, diff = pair_differences(points, values, max_pairs, seed)
    if dist.size < 100:
        raise ConfigurationError("need at least 100 sample pairs")
    lo, hi = float(dist.min()), float(dist.max())
    if hi / lo < 100.0 * (1 - 1e-9):
        raise ConfigurationError("sample separations must span at least 2 decades")
    grid = np.round(np.arange(0.0, 1.0 + 1e-9, alpha_step), 10)
    if not np.any(diff > 0):
        return HolderFit(1.0, 0.0, None, np.array([]), np.array([]))
    cut = lo * (hi / lo) ** scale_fraction * (1 + 1e-12)
    keep = dist <= cut
    dist, diff = dist[keep], diff[keep]
    edges = np.geomspace(lo, cut, n_bins + 1)
    b = np.clip(np.searchsorted(edges, dist, side="right") - 1, 0, n_bins - 1)
    env = np.zeros(n_bins)
    np.maximum.at(env, b, diff)
    centers = np.sqrt(edges[:-1] * edges[1:])
    ok = env > 0
    lx, ly = np.log(centers[ok]), np.log(env[ok])
    if ok.sum() >= 2:
        xc, yc = lx - lx.mean(), ly - ly.mean()
        misfit = [float(np.sum((yc - a * xc) ** 2)) for a in grid]
        # ties resolve toward the larger exponent
        best = int(len(grid) - 1 - np.argmin(misfit[::-1]))
        slope = float(np.dot(xc, yc) / np.dot(xc, xc))
    else:
        best, slope = len(grid) - 1, None
    a = float(grid[best])
    const = float(np.max(diff / dist ** a))
    return HolderFit(a, const, slope, centers[ok], env[ok])


def holder_constant(points, values, alpha: float, max_pairs=2_000_000, seed=0, min_sep=0.0) -> float:
    """sup over sampled pairs (separation >= min_sep) of |g(x) - g(y)| / |x - y|^alpha."""
    dist, diff = pair_differences(points, values, max_pairs, seed)
    keep = dist >= min_sep
    if not keep.any():
        return 0.0
    return float(np.max(diff[keep] / dist[keep] ** alpha))


def unit_normal(grad) -> np.ndarray:
    """Upward unit normal (-grad f, 1)/sqrt(1 + |grad f|^2) of a graph."""
    G = _as_points(grad)
    nrm = np.sqrt(1.0 + np.sum(G ** 2, axis=1, keepdims=True))
    return np.c_[-G, np.ones(len(G))] / nrm


@dataclass
class TransferReport:
    alpha: float
    c_grad: float
    c_normal: float
    M: float
    factor: float
    lower_ok: bool
    upper_ok: bool

    @property
    def passed(self):
        return self.lower_ok and self.upper_ok

    def to_dict(self):
        return dict(self.__dict__, passed=self.passed)


def normal_transfer_check(points, grads, alpha: float, max_pairs=2_000_000, seed=0,
                          rtol: float = 1e-12) -> TransferReport:
    """Compare the Hölder constants of grad f and of the graph normal on the same pairs.

    Checks C_nu <= C_grad and C_grad <= 2 (1 + M^2)^{1 + alpha/2} C_nu with
    M the largest sampled gradient.
    """
    G = _as_points(grads)
    nu = unit_normal(G)
    X = _as_points(points)
    i, j = _pairs(len(X), max_pairs, seed)
    dist = np.linalg.norm(X[i] - X[j], axis=1)
    keep = dist > 0
    i, j, dist = i[keep], j[keep], dist[keep]
    den = dist ** alpha
    cg = float(np.max(np.linalg.norm(G[i] - G[j], axis=1) / den, initial=0.0))
    cn = float(np.max(np.linalg.norm(nu[i] - nu[j], axis=1) / den, initial=0.0))
    M = float(np.max(np.linalg.norm(G, axis=1), initial=0.0))
    factor = 2.0 * (1.0 + M * M) ** (1.0 + alpha / 2.0)
    return TransferReport(alpha, cg, cn, M, factor,
                          cn <= cg * (1 + rtol) + 1e-300, cg <= factor * cn * (1 + rtol) + 1e-300)


@dataclass
class CylinderReport:
    alpha0: float
    constant: float
    radii: np.ndarray
    ratios: np.ndarray

    @property
    def passed_per_radius(self):
        return self.ratios <= self.constant * (1 + 1e-9)

    @property
    def passed(self):
        return bool(np.all(self.passed_per_radius))

    def to_dict(self):
        return {"alpha0": self.alpha0, "constant": self.constant, "radii": self.radii.tolist(),
                "ratios": self.ratios.tolist(), "passed": self.passed}


def cylinder_estimate_check(f: Callable, grad: Callable, center, alpha0: float,
                            radii: Sequence[float], samples: int = 401,
                            constant: Optional[float] = None, grad_tol: float = 1e-9) -> CylinderReport:
    """Height of E^f minus the lower half-space inside cylinders around a critical point.

    For each radius r, the largest |f(z) - f(y)| over |z - y| < r (capped at
    r, the cylinder half-height) is divided by r^{1 + alpha0} and compared
    with the Hölder constant of grad f at exponent alpha0, measured on the
    same samples unless given.
    """
    y = np.atleast_1d(np.asarray(center, dtype=float))
    m = y.size
    if np.linalg.norm(np.atleast_1d(grad(y[None])[0])) > grad_tol:
        raise ConfigurationError("grad f does not vanish at the test point")
    radii = np.asarray(sorted(radii), dtype=float)
    rmax = radii[-1]
    axes = [np.linspace(-rmax, rmax, samples) for _ in range(m)]
    Z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m) + y
    dz = np.linalg.norm(Z - y, axis=1)
    inside = dz < rmax
    Z, dz = Z[inside], dz[inside]
    height = np.abs(f(Z) - f(y[None])[0])
    if constant is None:
        g = np.asarray(grad(Z)).reshape(len(Z), -1)
        sub = np.linspace(0, len(Z) - 1, min(len(Z), 3000)).astype(int)
        constant = holder_constant(Z[sub], g[sub], alpha0)
    ratios = []
    for r in radii:
        sel = dz < r
        hmax = min(float(height[sel].max(initial=0.0)), r)
        ratios.append(hmax / r ** (1 + alpha0))
    return CylinderReport(alpha0, float(constant), radii, np.asarray(ratios))


def cylinder_estimate_mask(E: BinaryMask, center, alpha0: float, radii: Sequence[float],
                           constant: float) -> CylinderReport:
    """Rasterized version: cells of E xor {x_n < y_n} inside C_r(y), largest |z_n - y_n|."""
    d = E.domain
    X = d.centers()
    y = np.asarray(center, dtype=float)
    lower = X[..., -1] < y[-1]
    sym = E.bits ^ lower
    flat = np.sqrt(np.sum((X[..., :-1] - y[:-1]) ** 2, axis=-1))
    vert = np.abs(X[..., -1] - y[-1])
    ratios = []
    for r in sorted(radii):
        sel = sym & (flat < r) & (vert < r)
        # a cell straddling the level counts by its center; subtract half a cell of ambiguity
        hmax = max(float(vert[sel].max(initial=0.0)) - 0.5 * d.h, 0.0)
        ratios.append(hmax / r ** (1 + alpha0))
    return CylinderReport(alpha0, float(constant), np.asarray(sorted(radii), dtype=float), np.asarray(ratios))
