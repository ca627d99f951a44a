"""Graphs minimizing the nonparametric Massari energy.

For f on a base grid with fixed boundary values the discrete energy is

    sum_elements sqrt(1 + |grad_h f|^2) * area  -  sum_nodes Phi_y(f(y)) h^{n-1},

where Phi_y(t) is the integral of H(y, .) from -r to t.  H is sampled on
cells of each vertical column, so Phi_y is exact and piecewise linear.
In 1D the elements are the grid segments; in 2D every cell is covered
twice by the four corner triangles of its two diagonal splits, which
keeps the scheme symmetric.

Minimization uses damped Newton-type steps (the preconditioner is the
exact Hessian of the convex area term plus the convex part of the bulk
term) with Armijo backtracking, on a mollified primitive whose window
shrinks toward zero.  Mollifying replaces H(y, t) by its average over a
small window, so every stationarity statement below only ever involves
values of H actually taken in that window.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ._validation import ConfigurationError

log = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


@dataclass(frozen=True, eq=False)
class GraphProblem:
    """Dirichlet problem for a graph over a box Omega of dimension 1 or 2.

    ``H`` is a callable ``H(Y, S)`` (broadcasting over node coordinates
    ``Y`` of shape (..., m) and heights ``S``) or an array of shape
    ``nodes + (samples,)`` holding cell values on the vertical grid.
    ``boundary`` is a callable on node coordinates or a full nodal array
    whose boundary entries are used.
    """

    lower: tuple
    upper: tuple
    nodes: tuple
    r: float
    H: object
    boundary: object = 0.0
    Phi: Optional[np.ndarray] = None
    samples: int = 1024

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        nodes = tuple(int(v) for v in np.atleast_1d(self.nodes))
        if not (len(lower) == len(upper) == len(nodes)) or len(nodes) not in (1, 2):
            raise ConfigurationError("base grid must be 1D or 2D with matching bounds")
        if min(nodes) < 3:
            raise ConfigurationError("need at least 3 nodes per axis")
        spacing = [(u - l) / (k - 1) for l, u, k in zip(lower, upper, nodes)]
        if min(spacing) <= 0 or max(spacing) - min(spacing) > 1e-9 * max(spacing):
            raise ConfigurationError("base grid must have equal positive spacing on all axes")
        if not self.r > 0:
            raise ConfigurationError("vertical half-range r must be positive")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "r", float(self.r))
        # resolved data, computed once
        Y = self.coordinates()
        s_edges = np.linspace(-self.r, self.r, self.samples + 1)
        if callable(self.H):
            mid = 0.5 * (s_edges[1:] + s_edges[:-1])
            Hs = np.asarray(self.H(Y[..., None, :], mid), dtype=float)
            Hs = np.broadcast_to(Hs, nodes + (self.samples,)).copy()
        else:
            Hs = np.asarray(self.H, dtype=float)
            if Hs.shape != nodes + (self.samples,):
                raise ConfigurationError(f"sampled H has shape {Hs.shape}, expected {nodes + (self.samples,)}")
        if not np.isfinite(Hs).all():
            raise ConfigurationError("H must be finite")
        g = np.asarray(self.boundary(Y), dtype=float) if callable(self.boundary) else \
            np.broadcast_to(np.asarray(self.boundary, dtype=float), nodes).copy()
        bnd = self.boundary_mask()
        if np.any(np.abs(g[bnd]) >= self.r):
            raise ConfigurationError("boundary values must lie inside (-r, r)")
        if self.Phi is not None:
            phi = np.broadcast_to(np.asarray(self.Phi, dtype=float), nodes)
            if np.any(np.abs(Hs) > phi[..., None] * (1 + 1e-12) + 1e-300):
                raise ConfigurationError("|H| exceeds the bound field Phi on samples")
        object.__setattr__(self, "_H", Hs)
        object.__setattr__(self, "_g", g)
        object.__setattr__(self, "_edges", s_edges)

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def h(self) -> float:
        return (self.upper[0] - self.lower[0]) / (self.nodes[0] - 1)

    @property
    def ds(self) -> float:
        return 2.0 * self.r / self.samples

    @property
    def H_samples(self) -> np.ndarray:
        return self._H

    @property
    def boundary_values(self) -> np.ndarray:
        return self._g

    def coordinates(self) -> np.ndarray:
        axes = [np.linspace(l, u, k) for l, u, k in zip(self.lower, self.upper, self.nodes)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.nodes, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            m[tuple(idx)] = True
            idx[ax] = -1
            m[tuple(idx)] = True
        return m

    @property
    def H_sup(self) -> float:
        return float(np.max(np.abs(self._H)))


@dataclass
class GraphSolution:
    problem: GraphProblem
    f: np.ndarray
    energy: float
    trace: list = field(default_factory=list)
    stationarity: float = float("nan")
    start_energies: list = field(default_factory=list)

    @property
    def interior(self) -> np.ndarray:
        return ~self.problem.boundary_mask()


# --------------------------------------------------------------------------
# discrete energy


class _Model:
    """Element tables and column primitives for one problem."""

    def __init__(self, prob: GraphProblem):
        self.prob = prob
        h = prob.h
        idx = np.arange(int(np.prod(prob.nodes))).reshape(prob.nodes)
        if prob.dim == 1:
            self.elem = np.stack([idx[:-1], idx[1:]], axis=1)
            self.sign = np.ones((len(self.elem), 1))
            self.weight = h
        else:
            tris, signs = [], []
            c00, c10, c01, c11 = idx[:-1, :-1], idx[1:, :-1], idx[:-1, 1:], idx[1:, 1:]
            # each corner of a cell with its two cell neighbors, oriented by direction
            for c, a, b, s1, s2 in ((c00, c10, c01, 1, 1), (c10, c00, c11, -1, 1),
                                    (c01, c11, c00, 1, -1), (c11, c01, c10, -1, -1)):
                tris.append(np.stack([c.ravel(), a.ravel(), b.ravel()], axis=1))
                signs.append(np.tile([s1, s2], (c.size, 1)))
            self.elem = np.concatenate(tris)
            self.sign = np.concatenate(signs).astype(float)
            self.weight = h * h / 4.0
        self.h = h
        self.node_w = h ** prob.dim
        self.N = idx.size
        bnd = prob.boundary_mask().ravel()
        self.free = np.nonzero(~bnd)[0]
        self.fixed = bnd
        # column primitives at vertical edges (exact for piecewise-constant H)
        Hc = prob.H_samples.reshape(self.N, -1)
        ds = prob.ds
        self.Hc = Hc
        self.P1 = np.concatenate([np.zeros((self.N, 1)), np.cumsum(Hc * ds, axis=1)], axis=1)
        self.rows = np.arange(self.N)

    # vertical primitive and its mollified variants -------------------------

    def _cell(self, t):
        prob = self.prob
        k = np.floor((t + prob.r) / prob.ds).astype(np.int64)
        return np.clip(k, 0, prob.samples - 1)

    def Phi(self, t):
        k = self._cell(t)
        e = -self.prob.r + k * self.prob.ds
        return self.P1[self.rows, k] + self.Hc[self.rows, k] * (t - e)

    def H_at(self, t):
        """Right-continuous H(y, t) per node."""
        return self.Hc[self.rows, self._cell(t)]

    def _straddle(self, t, tau):
        """Nearest interior sample edge, its left slope, jump and overlap t + tau/2 - e (clipped)."""
        prob = self.prob
        j = np.clip(np.rint((t + prob.r) / prob.ds).astype(np.int64), 0, prob.samples)
        e = -prob.r + j * prob.ds
        hl = self.Hc[self.rows, np.clip(j - 1, 0, prob.samples - 1)]
        hr = self.Hc[self.rows, np.clip(j, 0, prob.samples - 1)]
        jump = np.where((j > 0) & (j < prob.samples), hr - hl, 0.0)
        w = np.clip(t + 0.5 * tau - e, 0.0, tau)
        return j, e, hl, jump, w

    # The window tau never exceeds one sample, so it meets at most one edge.
    # Below, Phi(s) = Phi_left(s) + jump * max(s - e, 0) with Phi_left affine.

    def Phi_tau(self, t, tau):
        if tau <= 0:
            return self.Phi(t)
        j, e, hl, jump, w = self._straddle(t, tau)
        base = self.P1[self.rows, j] + hl * (t - e)
        return base + jump * np.where(w >= tau, t - e, 0.5 * w * w / tau)

    def dPhi_tau(self, t, tau):
        if tau <= 0:
            return self.H_at(t)
        j, e, hl, jump, w = self._straddle(t, tau)
        return hl + jump * (w / tau)

    def d2Phi_tau(self, t, tau):
        if tau <= 0:
            return np.zeros_like(t)
        j, e, hl, jump, w = self._straddle(t, tau)
        return np.where((w > 0) & (w < tau), jump / tau, 0.0)

    # area term ---------------------------------------------------------------

    def slopes(self, f):
        e = self.elem
        return (f[e[:, 1:]] - f[e[:, :1]]) * self.sign / self.h

    def area(self, f):
        p = self.slopes(f)
        return float(np.sum(np.sqrt(1.0 + np.sum(p * p, axis=1)))) * self.weight

    def area_grad(self, f):
        p = self.slopes(f)
        g = p / np.sqrt(1.0 + np.sum(p * p, axis=1, keepdims=True))
        coef = g * self.sign * (self.weight / self.h)
        out = np.zeros(self.N)
        e = self.elem
        for k in range(coef.shape[1]):
            out += np.bincount(e[:, k + 1], coef[:, k], minlength=self.N)
        out -= np.bincount(e[:, 0], coef.sum(axis=1), minlength=self.N)
        return out

    def area_hessian(self, f):
        p = self.slopes(f)
        s2 = 1.0 + np.sum(p * p, axis=1)
        s = np.sqrt(s2)
        m = p.shape[1]
        e = self.elem
        # Jacobian of p w.r.t. (f_c, f_a[, f_b])
        J = np.zeros((len(e), m, m + 1))
        for k in range(m):
            J[:, k, 0] = -self.sign[:, k] / self.h
            J[:, k, k + 1] = self.sign[:, k] / self.h
        Hp = (np.eye(m)[None] * s2[:, None, None] - p[:, :, None] * p[:, None, :]) / (s2 * s)[:, None, None]
        local = np.einsum("eki,ekl,elj->eij", J, Hp, J) * self.weight
        rows = np.repeat(e, m + 1, axis=1).ravel()
        cols = np.tile(e, (1, m + 1)).ravel()
        return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(self.N, self.N))

    # total energy --------------------------------------------------------------

    def energy(self, f, tau=0.0):
        bulk = self.Phi_tau(f, tau)[self.free].sum() * self.node_w
        return self.area(f) - float(bulk)

    def grad(self, f, tau=0.0):
        g = self.area_grad(f)
        g[self.free] -= self.dPhi_tau(f, tau)[self.free] * self.node_w
        g[self.fixed] = 0.0
        return g

    def residual(self, f, edge_tol):
        """Per free node, distance of area_grad / h^{n-1} to the hull of one-sided H values."""
        a = self.area_grad(f)[self.free] / self.node_w
        t = f[self.free]
        rows = self.free
        k = np.floor((t + self.prob.r) / self.prob.ds)
        e_near = -self.prob.r + np.rint((t + self.prob.r) / self.prob.ds) * self.prob.ds
        kk = np.clip(k.astype(np.int64), 0, self.prob.samples - 1)
        hr = self.Hc[rows, kk]
        near = np.abs(t - e_near) <= edge_tol
        kl = np.clip(np.rint((t + self.prob.r) / self.prob.ds).astype(np.int64) - 1, 0, self.prob.samples - 1)
        ku = np.clip(kl + 1, 0, self.prob.samples - 1)
        lo = np.where(near, np.minimum(self.Hc[rows, kl], self.Hc[rows, ku]), hr)
        hi = np.where(near, np.maximum(self.Hc[rows, kl], self.Hc[rows, ku]), hr)
        return np.maximum(np.maximum(lo - a, a - hi), 0.0)


def energy(problem: GraphProblem, f) -> float:
    """Discrete energy of a nodal array (boundary entries are taken as given)."""
    return _Model(problem).energy(np.asarray(f, dtype=float).ravel())


def energy_gradient(problem: GraphProblem, f) -> np.ndarray:
    """Gradient w.r.t. free nodes (zero on boundary nodes); right-continuous H at sample edges."""
    m = _Model(problem)
    return m.grad(np.asarray(f, dtype=float).ravel()).reshape(problem.nodes)


def _descend(model: _Model, f, tau, tol, max_iter, trace):
    free = model.free
    r = model.prob.r
    lim = r * (1 - 1e-12)
    E = model.energy(f, tau)
    for it in range(max_iter):
        g = model.grad(f, tau)
        gf = g[free]
        if np.max(np.abs(gf)) / model.node_w < tol:
            return f, E, True
        A = model.area_hessian(f)[free][:, free]
        curv = -model.d2Phi_tau(f, tau)[free] * model.node_w
        diag = np.maximum(curv, 0.0) + 1e-12 * model.node_w
        P = (A + sp.diags(diag)).tocsc()
        d = -spsolve(P, gf)
        slope = float(gf @ d)
        if slope >= 0:
            d, slope = -gf, -float(gf @ gf)
        step = 1.0
        accepted = False
        noise = 1e-13 * (1.0 + abs(E))
        gnorm = np.max(np.abs(gf))
        while step > 1e-14:
            fn = f.copy()
            fn[free] = f[free] + step * d
            if np.all(np.abs(fn[free]) < lim):
                En = model.energy(fn, tau)
                if En <= E + 1e-4 * step * slope:
                    accepted = True
                    break
                # energy differences below roundoff: fall back on the gradient
                if En <= E + noise and np.max(np.abs(model.grad(fn, tau)[free])) < 0.5 * gnorm:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            return f, E, False
        trace.append(En)
        f, E = fn, En
    return f, E, False


def _start_values(prob: GraphProblem, k: int, rng):
    g = prob.boundary_values
    if prob.dim == 1:
        base = np.linspace(g[0], g[-1], prob.nodes[0])
    else:
        # bilinear blend of the four sides (exact for affine data)
        nx, ny = prob.nodes
        u = np.linspace(0, 1, nx)[:, None]
        v = np.linspace(0, 1, ny)[None, :]
        base = ((1 - v) * g[:, :1] + v * g[:, -1:] + (1 - u) * g[:1, :] + u * g[-1:, :]
                - ((1 - u) * (1 - v) * g[0, 0] + u * (1 - v) * g[-1, 0]
                   + (1 - u) * v * g[0, -1] + u * v * g[-1, -1]))
    base = np.clip(base, -0.9 * prob.r, 0.9 * prob.r)
    if k == 0:
        return base
    # smooth random bump of random sign, vanishing on the boundary
    Y = prob.coordinates()
    lo, up = np.asarray(prob.lower), np.asarray(prob.upper)
    bump = np.prod(np.sin(np.pi * (Y - lo) / (up - lo)), axis=-1)
    amp = rng.uniform(-0.8, 0.8) * prob.r
    return np.clip(base + amp * bump, -0.95 * prob.r, 0.95 * prob.r)


def minimize_nonparametric(problem: GraphProblem, n_starts: int = 5, seed: int = 0,
                           tol: float = 1e-10, max_iter: int = 200, tau_levels: int = 8,
                           check: bool = True) -> GraphSolution:
    """Best of several damped-descent runs on the discrete nonparametric energy.

    Raises :class:`NonConvergenceError` when no start reaches stationarity
    (max nodal residual below ``max(1e3 * tol, 1e-6)`` times (1 + sup|H|)).
    """
    model = _Model(problem)
    rng = np.random.default_rng(seed)
    bnd = problem.boundary_mask().ravel()
    g = problem.boundary_values.ravel()
    ds = problem.ds
    taus = [0.5 * ds * 10.0 ** (-k) for k in range(tau_levels)]
    best = None
    starts = []
    scale = 1.0 + problem.H_sup
    for k in range(max(1, n_starts)):
        f = _start_values(problem, k, rng).ravel().copy()
        f[bnd] = g[bnd]
        trace = []
        for tau in taus:
            f, _, _ = _descend(model, f, tau, tol * scale, max_iter, trace)
        E = model.energy(f)
        res = float(np.max(model.residual(f, taus[-1]), initial=0.0))
        starts.append(E)
        log.debug("start %d: energy %.12g residual %.3g", k, E, res)
        if best is None or E < best[1] - 1e-15:
            best = (f, E, trace, res)
    f, E, trace, res = best
    if check and res > max(1e3 * tol, 1e-6) * scale:
        raise NonConvergenceError(f"stationarity residual {res:.3g} above tolerance", trace)
    return GraphSolution(problem, f.reshape(problem.nodes), E, trace, res, starts)


# --------------------------------------------------------------------------
# diagnostics


def discrete_mean_curvature(sol) -> np.ndarray:
    """Discrete div(grad f / sqrt(1 + |grad f|^2)) at nodes; NaN on the boundary.

    It is minus the area part of the energy gradient divided by h^{n-1},
    so at a minimizer it equals -H(y, f(y)) wherever H is continuous in the
    vertical variable.  Accepts a :class:`GraphSolution` or a (problem, f) pair.
    """
    prob, f = (sol.problem, sol.f) if isinstance(sol, GraphSolution) else sol
    m = _Model(prob)
    out = -m.area_grad(np.asarray(f, dtype=float).ravel()) / m.node_w
    out[prob.boundary_mask().ravel()] = np.nan
    return out.reshape(prob.nodes)


def _interior_norm(vals, q, w):
    if math.isinf(q):
        return float(np.max(np.abs(vals), initial=0.0))
    return float(np.sum(np.abs(vals) ** q) * w) ** (1.0 / q)


@dataclass
class DivergenceBoundReport:
    q: float
    lhs: float
    rhs: float
    slack: float
    tolerance: float

    @property
    def passed(self):
        return self.slack <= self.tolerance

    def to_dict(self):
        return dict(self.__dict__, passed=self.passed)


def check_divergence_bound(sol: GraphSolution, Phi=None, q=math.inf, tolerance: float = 0.05) -> DivergenceBoundReport:
    """Compare the discrete divergence norm with the norm of the bound field over interior nodes.

    ``slack`` is max(0, lhs/rhs - 1); the check passes when it does not
    exceed ``tolerance``.
    """
    prob = sol.problem
    phi = prob.Phi if Phi is None else Phi
    if phi is None:
        raise ConfigurationError("a bound field Phi is required")
    phi = np.broadcast_to(np.asarray(phi, dtype=float), prob.nodes)
    if np.any(np.abs(prob.H_samples) > phi[..., None] * (1 + 1e-12) + 1e-300):
        raise ConfigurationError("|H| exceeds Phi on samples")
    q = float(q)
    inner = ~prob.boundary_mask()
    w = prob.h ** prob.dim
    lhs = _interior_norm(discrete_mean_curvature(sol)[inner], q, w)
    rhs = _interior_norm(phi[inner], q, w)
    if rhs == 0:
        slack = 0.0 if lhs <= 1e-9 else math.inf
    else:
        slack = max(0.0, lhs / rhs - 1.0)
    return DivergenceBoundReport(q, lhs, rhs, slack, tolerance)


@dataclass
class C11Report:
    lipschitz: float
    predicted: float
    M: float
    H_sup: float
    tolerance: float

    @property
    def passed(self):
        return self.lipschitz <= self.predicted * (1 + self.tolerance) + 1e-12

    def to_dict(self):
        return dict(self.__dict__, passed=self.passed)


def derivative_samples(sol: GraphSolution):
    """Midpoints and forward-difference slopes of a 1D solution."""
    prob = sol.problem
    if prob.dim != 1:
        raise ConfigurationError("derivative samples need a 1D base")
    y = np.linspace(prob.lower[0], prob.upper[0], prob.nodes[0])
    return 0.5 * (y[1:] + y[:-1]), np.diff(sol.f) / prob.h


def c11_witness_2d(sol: GraphSolution, tolerance: float = 0.1, min_cells: int = 4) -> C11Report:
    """Lipschitz constant of f' (pairs at least ``min_cells`` apart) against (1 + M^2)^{3/2} sup|H|."""
    x, d = derivative_samples(sol)
    i, j = np.triu_indices(len(x), min_cells)
    lip = float(np.max(np.abs(d[i] - d[j]) / np.abs(x[i] - x[j]), initial=0.0))
    M = float(np.max(np.abs(d)))
    Hs = sol.problem.H_sup
    return C11Report(lip, (1 + M * M) ** 1.5 * Hs, M, Hs, tolerance)
