"""Uniform grids, cell masks, cell fields and a pairwise discrete perimeter.

A set is stored as the union of the cells whose centers satisfy its
defining predicate.  The perimeter counts cut neighbor pairs of a fixed
stencil, weighted so that axis-aligned interfaces have exact length
(area in 3D) and the worst-case anisotropy is small.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.optimize import linprog

from ._validation import (
    ConfigurationError,
    DomainMismatchError,
    as_bool_array,
    as_finite_array,
    check_dimension,
    check_p,
    check_positive,
)


class EmptyRegionWarning(UserWarning):
    """Emitted when a norm is taken over an empty region."""


@dataclass(frozen=True)
class GridDomain:
    """Box of ``counts`` cells of side ``h`` whose lower corner is ``origin``.

    Axis ``k`` of every array corresponds to the coordinate ``x_{k+1}``;
    the last axis is the vertical direction ``x_n``.
    """

    counts: tuple
    h: float
    origin: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        check_dimension(len(counts))
        if min(counts) < 1:
            raise ConfigurationError(f"cell counts must be >= 1, got {counts}")
        origin = tuple(float(o) for o in self.origin)
        if len(origin) != len(counts):
            raise ConfigurationError("origin and counts differ in length")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "h", check_positive("h", self.h))

    @classmethod
    def from_bounds(cls, lower, upper, cells_per_axis):
        """Cover the box [lower, upper] by cubic cells.

        ``cells_per_axis`` fixes the count along the first axis; the other
        counts follow from the extents.
        """
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        h = float(upper[0] - lower[0]) / int(cells_per_axis)
        counts = np.rint((upper - lower) / h).astype(int)
        return cls(tuple(counts), h, tuple(lower))

    @classmethod
    def centered(cls, n, half_width, cells_per_axis):
        """Cube (-half_width, half_width)^n with the given cells per axis."""
        return cls.from_bounds([-half_width] * n, [half_width] * n, cells_per_axis)

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) * self.h

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + self.extent

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def axis_centers(self, k: int) -> np.ndarray:
        return self.origin[k] + (np.arange(self.counts[k]) + 0.5) * self.h

    def centers(self) -> np.ndarray:
        """Cell centers as an array of shape ``counts + (n,)``."""
        axes = [self.axis_centers(k) for k in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def coordinate(self, k: int) -> np.ndarray:
        """Broadcastable array of the k-th center coordinate."""
        shape = [1] * self.n
        shape[k] = self.counts[k]
        return self.axis_centers(k).reshape(shape)

    def index_of(self, point) -> tuple:
        """Index of the cell containing ``point`` (clipped to the grid)."""
        rel = (np.asarray(point, dtype=float) - np.asarray(self.origin)) / self.h
        idx = np.clip(np.floor(rel).astype(int), 0, np.asarray(self.counts) - 1)
        return tuple(int(i) for i in idx)

    def to_dict(self) -> dict:
        return {"n": self.n, "counts": list(self.counts), "h": self.h, "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["counts"]), float(d["h"]), tuple(d["origin"]))


def _readonly(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Cell bitmask on a domain; ``bits[idx]`` is True when the cell belongs to the set."""

    domain: GridDomain
    bits: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        bits = as_bool_array(self.bits, self.domain.counts, "mask")
        object.__setattr__(self, "bits", _readonly(bits))

    @classmethod
    def empty(cls, domain):
        return cls(domain, np.zeros(domain.counts, dtype=bool))

    @classmethod
    def full(cls, domain):
        return cls(domain, np.ones(domain.counts, dtype=bool))

    def _other(self, other):
        if isinstance(other, BinaryMask):
            if other.domain != self.domain:
                raise DomainMismatchError("masks live on different grid domains")
            return other.bits
        return as_bool_array(other, self.domain.counts)

    def __and__(self, other):
        return BinaryMask(self.domain, self.bits & self._other(other))

    def __or__(self, other):
        return BinaryMask(self.domain, self.bits | self._other(other))

    def __sub__(self, other):
        return BinaryMask(self.domain, self.bits & ~self._other(other))

    def __xor__(self, other):
        return BinaryMask(self.domain, self.bits ^ self._other(other))

    def __invert__(self):
        return self.complement()

    def __eq__(self, other):
        return (
            isinstance(other, BinaryMask)
            and other.domain == self.domain
            and bool(np.array_equal(other.bits, self.bits))
        )

    __hash__ = None

    def complement(self):
        return BinaryMask(self.domain, ~self.bits)

    def issubset(self, other) -> bool:
        return not bool(np.any(self.bits & ~self._other(other)))

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def volume(self) -> float:
        return self.count * self.domain.cell_volume

    def any(self) -> bool:
        return bool(self.bits.any())


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Finite real value per cell, with an optional unit tag."""

    domain: GridDomain
    values: np.ndarray
    unit: str = ""

    def __post_init__(self):
        vals = as_finite_array(self.values, self.domain.counts, "field")
        object.__setattr__(self, "values", _readonly(vals))

    @classmethod
    def constant(cls, domain, c, unit=""):
        return cls(domain, np.full(domain.counts, float(c)), unit)

    def where(self, mask: BinaryMask, other: "ScalarField") -> "ScalarField":
        if mask.domain != self.domain or other.domain != self.domain:
            raise DomainMismatchError("fields and mask live on different grid domains")
        return ScalarField(self.domain, np.where(mask.bits, self.values, other.values), self.unit)


# --------------------------------------------------------------------------
# perimeter weights


def _half_stencil(n: int, name: str) -> list:
    if n == 2 and name in ("n4", "n8", "n16"):
        radius = 2 if name == "n16" else 1
    elif n == 3 and name in ("n6", "n18", "n26"):
        radius = 1
    else:
        raise ConfigurationError(f"unknown stencil {name!r} for n={n}")
    offs = []
    for o in itertools.product(range(-radius, radius + 1), repeat=n):
        nz = [c for c in o if c != 0]
        if not nz or nz[0] < 0:
            continue
        if math.gcd(*[abs(c) for c in o]) != 1:
            continue
        if name in ("n4", "n6") and len(nz) > 1:
            continue
        if name == "n18" and len(nz) > 2:
            continue
        offs.append(o)
    return offs


def _class_key(o):
    return tuple(sorted(abs(c) for c in o))


def _sample_normals(n: int, m: int = 4000) -> np.ndarray:
    if n == 2:
        t = np.linspace(0.0, np.pi / 2, m)
        return np.c_[np.cos(t), np.sin(t)]
    # Fibonacci lattice on the sphere, deterministic
    i = np.arange(m) + 0.5
    phi = np.arccos(1 - 2 * i / m)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return np.c_[np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)]


@lru_cache(maxsize=None)
def _calibrated(n: int, name: str):
    offs = _half_stencil(n, name)
    keys = sorted({_class_key(o) for o in offs})
    cls = [keys.index(_class_key(o)) for o in offs]
    K = len(keys)
    N = _sample_normals(n)
    A = np.zeros((len(N), K))
    axis = np.zeros(K)
    for o, c in zip(offs, cls):
        A[:, c] += np.abs(N @ np.asarray(o, dtype=float))
        axis[c] += abs(o[-1])
    if K == 1:
        w = np.array([1.0 / axis[0]])
    else:
        # minimise max |L(nu) - 1| subject to exact axis length
        m = len(N)
        cost = np.r_[np.zeros(K), 1.0]
        A_ub = np.r_[np.c_[A, -np.ones(m)], np.c_[-A, -np.ones(m)]]
        b_ub = np.r_[np.ones(m), -np.ones(m)]
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=np.r_[axis, 0.0][None], b_eq=[1.0],
                      bounds=[(0, None)] * (K + 1), method="highs")
        if not res.success:  # pragma: no cover
            raise RuntimeError(f"stencil calibration failed: {res.message}")
        w = res.x[:K]
    return tuple(offs), tuple(float(w[c]) for c in cls)


@dataclass(frozen=True)
class PerimeterWeights:
    """Half stencil of integer offsets with one positive weight each.

    Only one offset of every pair ``{e, -e}`` is stored; the weight applies
    to the unordered neighbor pair, so the stencil is symmetric by
    construction.
    """

    offsets: tuple
    weights: tuple
    name: str = "custom"

    def __post_init__(self):
        offs = tuple(tuple(int(c) for c in o) for o in self.offsets)
        w = tuple(float(x) for x in self.weights)
        if len(offs) != len(w) or not offs:
            raise ConfigurationError("offsets and weights must be nonempty and aligned")
        if any(x <= 0 for x in w):
            raise ConfigurationError("stencil weights must be positive")
        n = len(offs[0])
        check_dimension(n)
        seen = set()
        for o in offs:
            if len(o) != n or not any(o):
                raise ConfigurationError(f"bad stencil offset {o}")
            if o in seen or tuple(-c for c in o) in seen:
                raise ConfigurationError(f"offset {o} listed twice (store one of each +/- pair)")
            seen.add(o)
        object.__setattr__(self, "offsets", offs)
        object.__setattr__(self, "weights", w)

    @classmethod
    def standard(cls, n: int, name: Optional[str] = None) -> "PerimeterWeights":
        """Calibrated stencil; default 16-neighborhood (2D) or 26-neighborhood (3D)."""
        n = check_dimension(n)
        if name is None:
            name = "n16" if n == 2 else "n26"
        offs, w = _calibrated(n, name)
        return cls(offs, w, name)

    @property
    def n(self) -> int:
        return len(self.offsets[0])

    @property
    def radius(self) -> int:
        return max(max(abs(c) for c in o) for o in self.offsets)

    def full_stencil(self):
        """All offsets with both signs, each with its pair weight."""
        out = []
        for o, w in zip(self.offsets, self.weights):
            out.append((o, w))
            out.append((tuple(-c for c in o), w))
        return out

    def normal_length(self, normals) -> np.ndarray:
        """Length density of a flat interface with the given unit normals."""
        N = np.atleast_2d(np.asarray(normals, dtype=float))
        E = np.asarray(self.offsets, dtype=float)
        return np.abs(N @ E.T) @ np.asarray(self.weights)

    def anisotropy(self, m: int = 4000) -> float:
        """Worst relative deviation of the interface length from 1 over sampled normals."""
        return float(np.max(np.abs(self.normal_length(_sample_normals(self.n, m)) - 1.0)))

    def structure(self) -> np.ndarray:
        """Boolean footprint of the full stencil (for dilations)."""
        r = self.radius
        s = np.zeros((2 * r + 1,) * self.n, dtype=bool)
        s[(r,) * self.n] = True
        for o, _ in self.full_stencil():
            s[tuple(r + c for c in o)] = True
        return s


def resolve_weights(weights, n: int) -> PerimeterWeights:
    if weights is None or isinstance(weights, str):
        return PerimeterWeights.standard(n, weights)
    if weights.n != n:
        raise DomainMismatchError(f"stencil is {weights.n}D but the domain is {n}D")
    return weights


def pair_slices(shape, offset):
    """Slices (lo, hi) so that ``a[lo]`` and ``a[hi]`` enumerate all pairs (x, x+offset)."""
    lo, hi = [], []
    for N, k in zip(shape, offset):
        if abs(k) >= N:
            return None
        if k >= 0:
            lo.append(slice(0, N - k))
            hi.append(slice(k, N))
        else:
            lo.append(slice(-k, N))
            hi.append(slice(0, N + k))
    return tuple(lo), tuple(hi)


def perimeter_array(bits: np.ndarray, h: float, weights: PerimeterWeights, region=None) -> float:
    """Array-level perimeter; see :func:`perimeter`."""
    n = bits.ndim
    total = 0.0
    for o, w in zip(weights.offsets, weights.weights):
        sl = pair_slices(bits.shape, o)
        if sl is None:
            continue
        lo, hi = sl
        cut = bits[lo] != bits[hi]
        if region is None:
            total += w * np.count_nonzero(cut)
        else:
            total += w * 0.5 * (np.count_nonzero(cut & region[lo]) + np.count_nonzero(cut & region[hi]))
    return float(total) * h ** (n - 1)


def perimeter(mask: BinaryMask, region: Optional[BinaryMask] = None, weights=None) -> float:
    """Discrete perimeter of ``mask`` inside ``region``.

    Every cut neighbor pair contributes its stencil weight times
    ``h^{n-1}``, split evenly between its two endpoints; a region collects
    the halves of the endpoints it contains.  With ``region=None`` the
    whole domain is used and each pair inside the domain counts once.
    Pairs leaving the domain are ignored, so the value is the perimeter
    relative to the open box.
    """
    weights = resolve_weights(weights, mask.domain.n)
    reg = None
    if region is not None:
        if region.domain != mask.domain:
            raise DomainMismatchError("mask and region live on different grid domains")
        reg = region.bits
    return perimeter_array(mask.bits, mask.domain.h, weights, reg)


def dilate(mask: BinaryMask, weights=None, iterations: int = 1) -> BinaryMask:
    """Grow a mask by the stencil footprint."""
    weights = resolve_weights(weights, mask.domain.n)
    out = ndimage.binary_dilation(mask.bits, structure=weights.structure(), iterations=iterations)
    return BinaryMask(mask.domain, out)


def boundary_cells(mask: BinaryMask) -> BinaryMask:
    """Cells of the mask with an axis neighbor outside it."""
    inner = ndimage.binary_erosion(mask.bits, border_value=1)
    return BinaryMask(mask.domain, mask.bits & ~inner)


# --------------------------------------------------------------------------
# shape descriptors and rasterization


@dataclass(frozen=True)
class Ball:
    center: Sequence[float]
    radius: float

    def contains(self, X):
        c = np.asarray(self.center, dtype=float)
        return np.sum((X - c) ** 2, axis=-1) < self.radius ** 2

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class Cylinder:
    """Open cylinder: horizontal ball of radius r times a vertical interval of half-length r."""

    center: Sequence[float]
    radius: float

    def contains(self, X):
        c = np.asarray(self.center, dtype=float)
        flat = np.sum((X[..., :-1] - c[:-1]) ** 2, axis=-1) < self.radius ** 2
        return flat & (np.abs(X[..., -1] - c[-1]) < self.radius)

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class HalfSpace:
    """Points with ``x . normal < offset``."""

    normal: Sequence[float]
    offset: float = 0.0

    def contains(self, X):
        return X @ np.asarray(self.normal, dtype=float) < self.offset

    def bounds(self):
        return None


@dataclass(frozen=True)
class Subgraph:
    """Points below a graph: ``x_n < f(x_bar)``.

    ``f`` is either a callable on horizontal coordinates of shape
    ``(..., n-1)`` or an array sampled at the horizontal cell centers.
    """

    f: object

    def values(self, domain: GridDomain):
        if callable(self.f):
            axes = [domain.axis_centers(k) for k in range(domain.n - 1)]
            Y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
            return np.asarray(self.f(Y), dtype=float)
        vals = np.asarray(self.f, dtype=float)
        if vals.shape != domain.counts[:-1]:
            raise DomainMismatchError(
                f"sampled graph has shape {vals.shape}, expected {domain.counts[:-1]}")
        return vals

    def bounds(self):
        return None


@dataclass(frozen=True)
class Predicate:
    """Arbitrary predicate on center coordinates of shape ``(..., n)``."""

    fn: Callable

    def contains(self, X):
        return np.asarray(self.fn(X), dtype=bool)

    def bounds(self):
        return None


def rasterize(shape, domain: GridDomain) -> BinaryMask:
    """Cell-center rasterization of a shape descriptor.

    The returned mask carries ``meta['clipped']`` when a bounded shape
    reaches past the domain box (None for unbounded shapes).
    """
    if isinstance(shape, Subgraph):
        fvals = shape.values(domain)
        bits = domain.coordinate(domain.n - 1) < fvals[..., None]
    else:
        bits = shape.contains(domain.centers())
    clipped = None
    b = shape.bounds()
    if b is not None:
        lo, hi = b
        clipped = bool(np.any(lo < np.asarray(domain.origin)) or np.any(hi > domain.upper))
    return BinaryMask(domain, bits, {"clipped": clipped})


# --------------------------------------------------------------------------
# norms


def lp_norm(field: ScalarField, p, region: Optional[BinaryMask] = None) -> float:
    """L^p norm ``(sum |v|^p h^n)^{1/p}`` over the region; max for p = inf.

    An empty region yields 0 and an :class:`EmptyRegionWarning`.
    """
    p = check_p(p)
    vals = field.values
    if region is not None:
        if region.domain != field.domain:
            raise DomainMismatchError("field and region live on different grid domains")
        vals = vals[region.bits]
    else:
        vals = vals.ravel()
    if vals.size == 0:
        warnings.warn("lp_norm over an empty region", EmptyRegionWarning, stacklevel=2)
        return 0.0
    a = np.abs(vals)
    if math.isinf(p):
        return float(a.max())
    m = a.max()
    if m == 0:
        return 0.0
    # factor out the max to keep large exponents finite
    s = np.sum((a / m) ** p) * field.domain.cell_volume
    return float(m * s ** (1.0 / p))
