"""Problem builders shared by several test modules."""

import numpy as np

from vmclab.graph_pmc import GraphProblem


def random_piecewise_problem(seed, nodes=512, half=0.5, r=1.0, samples=1024):
    """1D-base graph problem with H piecewise constant in y and s, |H| <= M."""
    rng = np.random.default_rng(seed)
    M = rng.uniform(0.5, 2.0)
    ky, ks = rng.integers(2, 6), rng.integers(2, 8)
    V = rng.uniform(-M, M, (ky, ks))
    yb = np.sort(rng.uniform(-half, half, ky - 1))
    sb = np.sort(rng.uniform(-0.8 * r, 0.8 * r, ks - 1))

    def H(Y, S):
        return V[np.searchsorted(yb, Y[..., 0]), np.searchsorted(sb, S)]

    bd = np.zeros(nodes)
    bd[0], bd[-1] = rng.uniform(-0.3 * r, 0.3 * r, 2)
    return GraphProblem((-half,), (half,), (nodes,), r, H, bd, Phi=M, samples=samples)


def arc_profile(y, a, c=1.0):
    """Circular arc of curvature c through (+-a, 0), bulging upward."""
    R = 1.0 / c
    return np.sqrt(R * R - y * y) - np.sqrt(R * R - a * a)
