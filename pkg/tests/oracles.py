"""Independent reference computations used by several test modules."""

import numpy as np

from tvexact.fidelity import L1, BoxQuant, EqualityTo, Quadratic


def fidelity_values(f, X):
    """Evaluate the data term on rows of ``X`` straight from its definition (vectorized)."""
    X = np.atleast_2d(X)
    R = X - f.b
    if isinstance(f, EqualityTo):
        return np.where(np.max(np.abs(R), axis=1) <= f.tol, 0.0, np.inf)
    if isinstance(f, Quadratic):
        return 0.5 * f.lam * np.sum((R / f.C) ** 2, axis=1)
    if isinstance(f, L1):
        return f.lam * np.sum(np.abs(R), axis=1)
    if isinstance(f, BoxQuant):
        return np.where(np.max(np.abs(f.C * R), axis=1) <= 1.0 + f.tol, 0.0, np.inf)
    raise TypeError(type(f))


def grid_conjugate(f, q, radius=1e3, n=41, levels=14, shrink=4.0):
    """``sup_x <q, x> - f(x)`` over ``||x - b||_inf <= radius`` by zooming tensor grids.

    Each level evaluates an ``n^m`` grid (odd ``n``, so the center is a grid
    point) and recenters on the best point with a smaller half-width. Returns
    ``(value, argmax)``.
    """
    q = np.asarray(q, dtype=float)
    m = len(q)
    center = f.b.astype(float).copy()
    r = radius
    best_val, best_x = -np.inf, center
    lo_box, hi_box = f.b - radius, f.b + radius
    for _ in range(levels):
        axes = [np.unique(np.append(np.clip(np.linspace(c - r, c + r, n), lo, hi), c))
                for c, lo, hi in zip(center, lo_box, hi_box)]
        if isinstance(f, BoxQuant):  # make the box corners and faces grid points
            axes = [np.unique(np.concatenate([a, [bi - 1 / ci, bi + 1 / ci]]))
                    for a, bi, ci in zip(axes, f.b, f.C)]
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
        vals = X @ q - fidelity_values(f, X)
        k = int(np.argmax(vals))
        if vals[k] >= best_val:
            best_val, best_x = float(vals[k]), X[k]
        center = best_x
        r = max(r / shrink, 1e-12)
    return best_val, best_x
