"""Shared test oracles."""

import itertools

import numpy as np


def vertex_enumeration_optimum(c, a_eq, b_eq, tol=1e-9):
    """Brute-force optimum of min c.x s.t. a_eq x = b_eq, x >= 0.

    Enumerates basic solutions; only valid for bounded feasible instances.
    Returns (optimum, vertex) or (None, None) if no feasible vertex exists.
    """
    c = np.asarray(c, dtype=np.float64)
    a_eq = np.atleast_2d(np.asarray(a_eq, dtype=np.float64))
    b_eq = np.asarray(b_eq, dtype=np.float64)
    m, n = a_eq.shape
    best = (None, None)
    for cols in itertools.combinations(range(n), m):
        sub = a_eq[:, cols]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        xb = np.linalg.solve(sub, b_eq)
        if np.min(xb) < -tol:
            continue
        x = np.zeros(n)
        x[list(cols)] = xb
        val = float(c @ x)
        if best[0] is None or val < best[0]:
            best = (val, x)
    return best


def random_bounded_lp(rng, n_max=6):
    """Random standard-form LP with a bounded nonempty feasible set.

    A row of ones caps the simplex-like feasible set so vertex enumeration
    is exact.
    """
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, n))
    a = rng.normal(size=(m, n))
    x_feas = rng.uniform(0.1, 1.0, size=n)
    a = np.vstack([a, np.ones(n)])
    b = a @ x_feas
    c = rng.normal(size=n)
    return c, a, b
