"""Explicit sets showing that the Hölder exponent (p - n)/(p + 1) cannot be improved.

* ``cusp2d``: the planar set below ``x2 = sgn(x1)|x1|^{1+a}`` with an
  explicit unit extension V of its normal; H = div V is a variational
  mean curvature and lies in L^p exactly when a > (p - 2)/(p + 1).
* ``cuspNd``: the convex set ``{|x'|^{1+a} < x_n < 1}`` capped by a ball,
  whose optimal curvature is bounded through inscribed balls.
* ``log_example_field``: a graph whose gradient is Hölder for every
  exponent below 1 yet not Lipschitz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._validation import ConfigurationError, check_dimension, check_open_unit, check_p
from .cut import MinimalityReport, verify_minimality
from .grid import BinaryMask, GridDomain, ScalarField, dilate, lp_norm, resolve_weights

D1_PLUS, D1_MINUS, D2_PLUS, D2_MINUS, ON_BOUNDARY, ON_BRANCH = (
    "D1+", "D1-", "D2+", "D2-", "dE", "dD-dE")


class PreconditionError(ConfigurationError):
    pass


# --------------------------------------------------------------------------
# planar cusp


def _graph(alpha, t):
    return np.sign(t) * np.abs(t) ** (1.0 + alpha)


def cusp2d_region(alpha, x) -> np.ndarray:
    """Region tag of each point (array of strings, shape ``x.shape[:-1]``)."""
    alpha = check_open_unit("alpha", alpha)
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    env = np.abs(x1) ** (1.0 + alpha)
    tag = np.where(np.abs(x2) < env, np.where(x1 > 0, D1_PLUS, D1_MINUS),
                   np.where(x2 > 0, D2_PLUS, D2_MINUS)).astype(object)
    on_env = np.abs(x2) == env
    tag[on_env & (x2 == _graph(alpha, x1))] = ON_BOUNDARY
    tag[on_env & (x2 != _graph(alpha, x1))] = ON_BRANCH
    return tag


def _covers_square(domain: GridDomain, half=1.0):
    return (np.all(np.asarray(domain.origin) <= -half + 1e-12)
            and np.all(domain.upper >= half - 1e-12))


def cusp2d_set(alpha, domain: GridDomain) -> BinaryMask:
    """Cells of (-1,1)^2 whose centers lie strictly below the odd cusp graph."""
    alpha = check_open_unit("alpha", alpha)
    if domain.n != 2 or not _covers_square(domain):
        raise ConfigurationError("cusp2d needs a 2D domain covering (-1, 1)^2")
    x1 = domain.coordinate(0)
    x2 = domain.coordinate(1)
    inside = (np.abs(x1) < 1) & (np.abs(x2) < 1)
    return BinaryMask(domain, inside & (x2 < _graph(alpha, x1)), {"family": "cusp2d", "alpha": alpha})


def cusp2d_normal_field(alpha, x) -> np.ndarray:
    """Unit extension V of the outer normal, shape ``x.shape``.

    V depends on |x1| in D1 and on |x2|^{a/(1+a)} in D2; on both curves
    the two expressions coincide, so the choice there is immaterial.
    """
    alpha = check_open_unit("alpha", alpha)
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    in_d1 = np.abs(x2) <= np.abs(x1) ** (1.0 + alpha)
    s = np.where(in_d1, np.abs(x1) ** alpha, np.abs(x2) ** (alpha / (1.0 + alpha)))
    g = (1.0 + alpha) * s
    nrm = np.sqrt(1.0 + g * g)
    return np.stack([-g / nrm, 1.0 / nrm], axis=-1)


def cusp2d_curvature(alpha, x, region=None) -> np.ndarray:
    """Closed-form H = div V.

    ``region`` (tags as from :func:`cusp2d_region`) chooses the branch for
    points on the curves; by default the D1 branch is used there, and the
    origin gets 0.
    """
    alpha = check_open_unit("alpha", alpha)
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    tags = cusp2d_region(alpha, x) if region is None else np.asarray(region, dtype=object)
    use_d2 = (tags == D2_PLUS) | (tags == D2_MINUS)
    a = alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.abs(x1)
        h1 = -a * (1 + a) * t1 ** (a - 1) / (1 + (1 + a) ** 2 * t1 ** (2 * a)) ** 1.5
        t2 = np.abs(x2)
        e = 2 * a / (1 + a)
        h2 = -a * (1 + a) * t2 ** (e - 1) / (1 + (1 + a) ** 2 * t2 ** e) ** 1.5
        H = np.where(use_d2, np.sign(x2) * h2, np.sign(x1) * h1)
    return np.where(np.isfinite(H), H, 0.0)


def cusp2d_constant(alpha) -> float:
    """Explicit c(a) with |H| <= c(a)(|x1|^{a-1} on D1 + |x2|^{2a/(1+a)-1} on D2)."""
    alpha = check_open_unit("alpha", alpha)
    return alpha * (1.0 + alpha)


def cusp2d_bound(alpha, x) -> np.ndarray:
    alpha = check_open_unit("alpha", alpha)
    x = np.asarray(x, dtype=float)
    tags = cusp2d_region(alpha, x)
    use_d2 = (tags == D2_PLUS) | (tags == D2_MINUS)
    with np.errstate(divide="ignore"):
        b1 = np.abs(x[..., 0]) ** (alpha - 1)
        b2 = np.abs(x[..., 1]) ** (2 * alpha / (1 + alpha) - 1)
    return cusp2d_constant(alpha) * np.where(use_d2, b2, b1)


def cusp2d_curvature_field(alpha, domain: GridDomain) -> ScalarField:
    """H sampled at cell centers inside (-1,1)^2, zero elsewhere."""
    X = domain.centers()
    inside = np.all(np.abs(X) < 1, axis=-1)
    H = np.where(inside, cusp2d_curvature(alpha, X), 0.0)
    return ScalarField(domain, H, "1/length")


def cusp2d_grid_norm(alpha, p, cells: int) -> float:
    """L^p norm of |H| sampled at cell centers of a cells x cells grid on (-1,1)^2."""
    d = GridDomain.centered(2, 1.0, cells)
    return lp_norm(cusp2d_curvature_field(alpha, d), p)


# --------------------------------------------------------------------------
# thresholds and singular integrals


def lp_threshold(n, p) -> float:
    """(p - n)/(p + 1); the limit 1 for p = inf."""
    p = float(p)
    if math.isinf(p):
        return 1.0
    return (p - n) / (p + 1.0)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def power_integral(a: float, levels: int = 60) -> float:
    """int_0^1 t^a dt by Gauss-Legendre on dyadic pieces [2^-k-1, 2^-k] plus a closed-form tail.

    Returns inf when a <= -1.
    """
    if a <= -1:
        return math.inf
    total = 0.0
    for k in range(levels):
        lo, hi = 2.0 ** (-k - 1), 2.0 ** (-k)
        t = 0.5 * (hi - lo) * _GL_X + 0.5 * (hi + lo)
        total += 0.5 * (hi - lo) * float(np.dot(_GL_W, t ** a))
    return total + 2.0 ** (-levels * (a + 1)) / (a + 1)


@dataclass
class Classification:
    finite: bool
    threshold: float
    exponents: tuple
    value: Optional[float] = None
    closed_form: Optional[float] = None

    @property
    def label(self) -> str:
        return "finite" if self.finite else "divergent"


def cusp2d_exponents(alpha, p) -> tuple:
    a, p = float(alpha), float(p)
    return (1 + a - (1 - a) * p, 1 / (1 + a) - (1 - a) * p / (1 + a))


def _classify(exps, thr):
    finite = all(e > -1 for e in exps)
    if not finite:
        return Classification(False, thr, exps)
    value = sum(power_integral(e) for e in exps)
    closed = sum(1.0 / (e + 1) for e in exps)
    return Classification(True, thr, exps, value, closed)


def cusp2d_lp_classify(alpha, p) -> Classification:
    """Is int_0^1 t^{1+a-(1-a)p} + t^{1/(1+a)-(1-a)p/(1+a)} dt finite? Value when it is."""
    alpha = check_open_unit("alpha", alpha)
    p = check_p(p)
    return _classify(cusp2d_exponents(alpha, p), lp_threshold(2, p))


def cuspNd_exponent(n, alpha, p) -> float:
    return (n - 1) / (1 + alpha) - (1 - alpha) * p / (1 + alpha)


def cuspNd_classify(n, alpha, p) -> Classification:
    """Finiteness of int_0^1 x_n^{(n-1)/(1+a) - (1-a)p/(1+a)} dx_n."""
    if int(n) < 2:
        raise ConfigurationError("n must be >= 2")
    alpha = check_open_unit("alpha", alpha)
    p = check_p(p)
    return _classify((cuspNd_exponent(n, alpha, p),), lp_threshold(n, p))


def threshold_table(ns, ps, alphas):
    """Rows (n, p, alpha, classification, alpha_opt) for the CSV table."""
    rows = []
    for n in ns:
        for p in ps:
            for a in alphas:
                c = cusp2d_lp_classify(a, p) if n == 2 else cuspNd_classify(n, a, p)
                rows.append((n, p, a, c.label, lp_threshold(n, p)))
    return rows


# --------------------------------------------------------------------------
# cusp in n dimensions


def cuspNd_ball(n, alpha):
    """Center height and radius of the cap ball, tangent to the cusp at x_n = 1."""
    c = 1.0 / (1.0 + alpha)
    return 1.0 + c, math.sqrt(1.0 + c * c)


def cuspNd_contains(n, alpha, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    rad = np.sqrt(np.sum(X[..., :-1] ** 2, axis=-1))
    xn = X[..., -1]
    cusp = (rad ** (1 + alpha) < xn) & (xn < 1)
    zc, R = cuspNd_ball(n, alpha)
    ball = rad ** 2 + (xn - zc) ** 2 < R ** 2
    return cusp | ball


def cuspNd_set(n, alpha, domain: GridDomain, margin: float = 0.0) -> BinaryMask:
    """Rasterized cusp-with-cap set; the domain must contain it with the given margin."""
    n = check_dimension(n)
    alpha = check_open_unit("alpha", alpha)
    if domain.n != n:
        raise ConfigurationError(f"domain is {domain.n}D, expected {n}D")
    zc, R = cuspNd_ball(n, alpha)
    lo = np.r_[[-R] * (n - 1), 0.0] - margin
    hi = np.r_[[R] * (n - 1), zc + R] + margin
    if np.any(lo < np.asarray(domain.origin)) or np.any(hi > domain.upper):
        raise ConfigurationError("domain too small for the cusp set")
    bits = cuspNd_contains(n, alpha, domain.centers())
    return BinaryMask(domain, bits, {"family": "cuspNd", "alpha": alpha})


def cuspNd_ball_data(n, alpha, x_n):
    """Center z_x (as a length-n vector) and radius r_x of the ball through height x_n inside E."""
    alpha = check_open_unit("alpha", alpha)
    x_n = float(x_n)
    if not 0.0 < x_n <= 1.0:
        raise ConfigurationError(f"x_n must lie in (0, 1], got {x_n}")
    q = (1 - alpha) / (1 + alpha)
    z = np.zeros(int(n))
    z[-1] = x_n ** q / (1 + alpha) + x_n
    r = math.sqrt(x_n ** (2 * q) / (1 + alpha) ** 2 + x_n ** (2 / (1 + alpha)))
    return z, r


def _cusp_foot_radius(alpha, rho, z, iters: int = 64):
    """Ring radius R whose normal line passes through (rho, z).

    The normal line of the cusp surface at radius R consists of the points
    with z = R^{1+a} + (R - rho) / ((1 + a) R^a), strictly increasing in R;
    bisection runs in log R on [1e-12, 1].
    """
    a = alpha
    lo = np.full(np.shape(rho), math.log(1e-12))
    hi = np.zeros(np.shape(rho))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        R = np.exp(mid)
        G = R ** (1 + a) + (R - rho) / ((1 + a) * R ** a)
        below = G < z
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.exp(0.5 * (lo + hi))


def cuspNd_normal_field(n, alpha, X) -> np.ndarray:
    """Unit extension V of the outer normal of the capped cusp.

    Below the cone joining the rim x_n = 1 to the cap center, V is constant
    along each normal line of the cusp surface (these lines foliate that
    region inside and outside the set); above it V points away from the
    cap center.  |V| = 1 everywhere and V is the outer normal on the boundary.
    """
    n = check_dimension(n)
    alpha = check_open_unit("alpha", alpha)
    X = np.asarray(X, dtype=float)
    xp, z = X[..., :-1], X[..., -1]
    rho = np.sqrt(np.sum(xp * xp, axis=-1))
    zc, _ = cuspNd_ball(n, alpha)
    cap = z >= 1.0 + (1.0 - rho) / (1.0 + alpha)
    R = _cusp_foot_radius(alpha, rho, np.where(cap, 0.0, z))
    g = (1.0 + alpha) * R ** alpha
    nrm = np.sqrt(1.0 + g * g)
    with np.errstate(divide="ignore", invalid="ignore"):
        er = np.where(rho[..., None] > 0, xp / rho[..., None], 0.0)
    V = np.concatenate([er * (g / nrm)[..., None], (-1.0 / nrm)[..., None]], axis=-1)
    d = X.copy()
    d[..., -1] -= zc
    dn = np.linalg.norm(d, axis=-1, keepdims=True)
    Vc = np.where(dn > 0, d / np.where(dn > 0, dn, 1.0), 0.0)
    return np.where(cap[..., None], Vc, V)


def cuspNd_clearance(n, alpha, U_center, U_radius, samples: int = 4000) -> float:
    """Largest radius of a ball fitting between the set and the boundary of U, times 0.9.

    The gap is sampled along the radial profile of the boundary (cusp part
    and cap); the set is convex, so the distance from U's boundary to the
    set is attained on these points.
    """
    alpha = check_open_unit("alpha", alpha)
    c = np.asarray(U_center, dtype=float)
    zc, R = cuspNd_ball(n, alpha)
    t = np.linspace(0.0, 1.0, samples)
    cusp = np.c_[t, t ** (1 + alpha)]
    th = np.linspace(-np.pi / 2, np.pi / 2, samples)
    cap = np.c_[R * np.cos(th), zc + R * np.sin(th)]
    cap = cap[cap[:, 1] >= 1.0]
    prof = np.r_[cusp, cap]
    # rotate the profile around the axis in the plane containing the offset of U
    dirs = np.linspace(0, 2 * np.pi, 16, endpoint=False) if n == 3 else np.array([0.0, np.pi])
    gaps = []
    for phi in dirs:
        pts = np.zeros((len(prof), n))
        if n == 3:
            pts[:, 0] = prof[:, 0] * np.cos(phi)
            pts[:, 1] = prof[:, 0] * np.sin(phi)
        else:
            pts[:, 0] = prof[:, 0] * np.cos(phi)
        pts[:, -1] = prof[:, 1]
        gaps.append(U_radius - np.linalg.norm(pts - c, axis=1))
    gap = float(np.min(gaps))
    if gap <= 0:
        raise ConfigurationError("U does not contain the cusp set")
    return 0.9 * gap / 2.0


def cuspNd_curvature_bound(n, alpha, domain: GridDomain, U_center, U_radius) -> ScalarField:
    """Per-cell bound on the optimal curvature: n/r_x in the cusp, n/R on the cap, n/eps outside."""
    n = check_dimension(n)
    X = domain.centers()
    inside = cuspNd_contains(n, alpha, X)
    xn = X[..., -1]
    zc, R = cuspNd_ball(n, alpha)
    q = (1 - alpha) / (1 + alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        rx = np.sqrt(np.clip(xn, 0, None) ** (2 * q) / (1 + alpha) ** 2 + np.clip(xn, 0, None) ** (2 / (1 + alpha)))
    cap = np.sum((X[..., :-1]) ** 2, axis=-1) + (xn - zc) ** 2 < R ** 2
    eps = cuspNd_clearance(n, alpha, U_center, U_radius)
    with np.errstate(divide="ignore"):
        b_in = np.where(cap, n / R, n / np.maximum(rx, 1e-300))
    vals = np.where(inside, b_in, n / eps)
    in_U = np.linalg.norm(X - np.asarray(U_center, dtype=float), axis=-1) < U_radius
    return ScalarField(domain, np.where(in_U, vals, 0.0), "1/length")


# --------------------------------------------------------------------------
# graph with Hölder but non-Lipschitz gradient


def log_example_field(s, x, y):
    """f = (x^2 - y^2) sqrt(-log r) on the disk of radius s < 1, with f(0) = 0."""
    s = check_open_unit("s", s)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    if np.any(r2 >= s * s):
        raise ConfigurationError("points must lie in the open disk of radius s")
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (x * x - y * y) * np.sqrt(-0.5 * np.log(r2))
    return np.where(r2 > 0, f, 0.0)


def log_example_gradient(x, y):
    """Closed-form gradient of the log example (zero at the origin)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        L = -0.5 * np.log(r2)
        sq = np.sqrt(L)
        common = (x * x - y * y) / (2 * sq * r2)
        gx = 2 * x * sq - common * x
        gy = -2 * y * sq - common * y
    ok = r2 > 0
    return np.stack([np.where(ok, gx, 0.0), np.where(ok, gy, 0.0)], axis=-1)


def log_example_lipschitz_ratio(k: int, directions: int = 64) -> float:
    """Largest |grad f(x) - grad f(y)| / |x - y| over antipodal pairs at distance 2^-k."""
    delta = 2.0 ** (-k)
    th = np.linspace(0, np.pi, directions, endpoint=False)
    p = 0.5 * delta * np.c_[np.cos(th), np.sin(th)]
    g1 = log_example_gradient(p[:, 0], p[:, 1])
    g2 = log_example_gradient(-p[:, 0], -p[:, 1])
    return float(np.max(np.linalg.norm(g1 - g2, axis=1)) / delta)


# --------------------------------------------------------------------------
# verification through the divergence of a unit extension


@dataclass
class DivergenceReport:
    max_norm_V: float
    boundary_error: Optional[float]
    minimality: MinimalityReport
    curvature: Optional[ScalarField] = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.minimality.passed

    def to_dict(self):
        return {"max_norm_V": self.max_norm_V, "boundary_error": self.boundary_error,
                **self.minimality.to_dict()}


def fd_divergence(V: Callable, X: np.ndarray, step: float) -> np.ndarray:
    """Central-difference divergence of a vector field sampler."""
    n = X.shape[-1]
    out = np.zeros(X.shape[:-1])
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        out += (V(X + e)[..., k] - V(X - e)[..., k]) / (2 * step)
    return out


def verify_divergence_curvature(V: Callable, E: BinaryMask, U_free: BinaryMask, weights=None,
                                divergence: Optional[Callable] = None, boundary_samples=None,
                                n_perturbations: int = 1000, seed: int = 0,
                                slack: Optional[float] = None, fd_step: Optional[float] = None,
                                tol: float = 1e-9) -> DivergenceReport:
    """Rasterize H = div V and run the perturbation check of E under H in U_free.

    ``V`` and ``divergence`` take points of shape ``(..., n)``.
    ``boundary_samples`` is an optional pair (points on the boundary,
    outer normals there) used to check V = normal.  The default slack is
    3 h^{n-1}.
    """
    d = E.domain
    weights = resolve_weights(weights, d.n)
    X = d.centers()
    region = dilate(U_free, weights).bits
    Vs = V(X[region])
    vmax = float(np.max(np.linalg.norm(Vs, axis=-1))) if Vs.size else 0.0
    if vmax > 1 + tol:
        raise PreconditionError(f"|V| reaches {vmax:.6g} > 1 on the region")
    berr = None
    if boundary_samples is not None:
        pts, nrm = boundary_samples
        berr = float(np.max(np.linalg.norm(V(np.asarray(pts)) - np.asarray(nrm), axis=-1)))
        if berr > 1e-6:
            raise PreconditionError(f"V differs from the normal on the boundary by {berr:.3g}")
    H = np.zeros(d.counts)
    if divergence is not None:
        H[U_free.bits] = divergence(X[U_free.bits])
    else:
        H[U_free.bits] = fd_divergence(V, X[U_free.bits], fd_step or d.h * 1e-3)
    Hf = ScalarField(d, H, "1/length")
    if slack is None:
        slack = 3.0 * d.h ** (d.n - 1)
    rep = verify_minimality(E, Hf, U_free, weights, n_perturbations, seed, slack)
    return DivergenceReport(vmax, berr, rep, Hf)
