"""Independent reference computations used by the tests.

Nothing here calls the min-cut code: energies are evaluated for every
configuration by a batched neighbor-pair count written from scratch.
"""

import itertools

import numpy as np


def batch_perimeter(masks, h, offsets, weights, region):
    """Perimeter of a batch of masks (axis 0 = batch), half weight per endpoint in region."""
    nd = masks.ndim - 1
    shape = masks.shape[1:]
    out = np.zeros(masks.shape[0])
    for off, w in zip(offsets, weights):
        lo, hi = [slice(None)], [slice(None)]
        skip = False
        for N, k in zip(shape, off):
            if abs(k) >= N:
                skip = True
                break
            lo.append(slice(max(0, -k), N - max(0, k)))
            hi.append(slice(max(0, k), N + min(0, k)))
        if skip:
            continue
        a, b = masks[tuple(lo)], masks[tuple(hi)]
        ra, rb = region[tuple(lo[1:])], region[tuple(hi[1:])]
        cut = a != b
        cnt = (cut & ra).reshape(len(masks), -1).sum(1) + (cut & rb).reshape(len(masks), -1).sum(1)
        out += w * 0.5 * cnt
    return out * h ** (nd - 1)


def stencil_ring(free, offsets):
    ring = free.copy()
    idx = np.argwhere(free)
    for o in offsets:
        for s in (1, -1):
            pts = idx + s * np.asarray(o)
            ok = np.all((pts >= 0) & (pts < free.shape), axis=1)
            ring[tuple(pts[ok].T)] = True
    return ring


def brute_force(H, datum, free, h, offsets, weights, chunk=1 << 14):
    """Exhaustive minimum of the Massari energy; returns (min energy, smallest argmin mask).

    Ties are broken toward the configuration with the fewest cells, then
    lexicographically, so the smallest minimizer is returned when it is unique.
    """
    free_idx = np.argwhere(free)
    k = len(free_idx)
    region = stencil_ring(free, offsets)
    best_e, best_bits = np.inf, None
    vol = h ** datum.ndim
    codes = np.arange(2 ** k, dtype=np.int64)
    for start in range(0, 2 ** k, chunk):
        c = codes[start:start + chunk]
        bits = ((c[:, None] >> np.arange(k)) & 1).astype(bool)
        masks = np.repeat(datum[None], len(c), axis=0)
        masks[(slice(None),) + tuple(free_idx.T)] = bits
        per = batch_perimeter(masks, h, offsets, weights, region)
        bulk = (bits * H[tuple(free_idx.T)]).sum(1) * vol
        e = per - bulk
        j = int(np.argmin(e))
        if e[j] < best_e - 1e-12:
            best_e, best_bits = float(e[j]), masks[j].copy()
    return best_e, best_bits


def all_minimizers(H, datum, free, h, offsets, weights, tol=1e-9):
    """Every configuration within tol of the minimum (small k only)."""
    free_idx = np.argwhere(free)
    k = len(free_idx)
    region = stencil_ring(free, offsets)
    c = np.arange(2 ** k, dtype=np.int64)
    bits = ((c[:, None] >> np.arange(k)) & 1).astype(bool)
    masks = np.repeat(datum[None], len(c), axis=0)
    masks[(slice(None),) + tuple(free_idx.T)] = bits
    e = batch_perimeter(masks, h, offsets, weights, region) - (bits * H[tuple(free_idx.T)]).sum(1) * h ** datum.ndim
    return masks[e <= e.min() + tol], float(e.min())


def crofton_length_2d(weights_by_offset, theta):
    """Interface length density for normal angle theta (direct sum over offsets)."""
    nrm = np.array([np.cos(theta), np.sin(theta)])
    return sum(w * abs(np.dot(o, nrm)) for o, w in weights_by_offset)


def power_integral(a):
    """Closed form of int_0^1 t^a dt (inf when a <= -1)."""
    return np.inf if a <= -1 else 1.0 / (a + 1.0)


def enumerate_masks(shape):
    n = int(np.prod(shape))
    for code in itertools.product((False, True), repeat=n):
        yield np.array(code).reshape(shape)
