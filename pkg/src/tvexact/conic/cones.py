"""Cone types and Euclidean projections.

PSD blocks use the scaled lower-triangle vectorization: column-major lower
triangle, off-diagonal entries multiplied by sqrt(2), so that the Euclidean
inner product of two vectors equals the Frobenius product of the matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Zero:
    dim: int
    kind = "ZERO"


@dataclass(frozen=True)
class NonNeg:
    dim: int
    kind = "NONNEG"


@dataclass(frozen=True)
class Box:
    """Componentwise ``lo <= s <= hi``. A convex set, not a cone."""

    dim: int
    lo: float
    hi: float
    kind = "BOX"

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty box [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class SecondOrder:
    """``{(t, x) : ||x||_2 <= t}``; ``dim`` counts ``t``."""

    dim: int
    kind = "SOC"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("second-order cone needs dim >= 1")


@dataclass(frozen=True)
class PsdReal:
    """Real symmetric ``size x size`` PSD block in svec form."""

    size: int
    kind = "PSD"

    @property
    def dim(self) -> int:
        return self.size * (self.size + 1) // 2


Cone = Zero | NonNeg | Box | SecondOrder | PsdReal


def tril_indices(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the svec ordering (column-major lower triangle)."""
    cols, rows = np.triu_indices(size)
    return rows, cols


def svec_position(i: int, j: int, size: int) -> int:
    """Index of entry ``(i, j)`` (either triangle) inside svec of a ``size`` block."""
    if i < j:
        i, j = j, i
    # columns 0..j-1 contribute size, size-1, ... entries
    return j * size - j * (j - 1) // 2 + (i - j)


def svec(mat: np.ndarray) -> np.ndarray:
    size = mat.shape[0]
    rows, cols = tril_indices(size)
    v = mat[rows, cols].astype(float)
    v[rows != cols] *= SQRT2
    return v


def smat(vec: np.ndarray, size: int | None = None) -> np.ndarray:
    if size is None:
        size = int(round((np.sqrt(8 * len(vec) + 1) - 1) / 2))
    if size * (size + 1) // 2 != len(vec):
        raise ValueError(f"length {len(vec)} is not a triangular number")
    rows, cols = tril_indices(size)
    vals = np.asarray(vec, dtype=float).copy()
    vals[rows != cols] /= SQRT2
    mat = np.zeros((size, size))
    mat[rows, cols] = vals
    mat[cols, rows] = vals
    return mat


def _project_soc(v: np.ndarray) -> np.ndarray:
    t, x = v[0], v[1:]
    nx = np.linalg.norm(x)
    if nx <= t:
        return v.copy()
    if nx <= -t:
        return np.zeros_like(v)
    a = 0.5 * (nx + t)
    out = np.empty_like(v)
    out[0] = a
    out[1:] = (a / nx) * x
    return out


def _project_psd(v: np.ndarray, size: int) -> np.ndarray:
    mat = smat(v, size)
    w, U = np.linalg.eigh(mat)
    if w[0] >= 0:
        return v.copy()
    pos = w > 0
    U = U[:, pos]
    return svec((U * w[pos]) @ U.T)


def project_cone(cone: Cone, v: np.ndarray, lo=None, hi=None) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``cone``.

    ``lo``/``hi`` override the box bounds with per-entry arrays; the solver
    uses this after row equilibration.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (cone.dim,):
        raise ValueError(f"{cone.kind} cone of dim {cone.dim} got vector of shape {v.shape}")
    if isinstance(cone, Zero):
        return np.zeros_like(v)
    if isinstance(cone, NonNeg):
        return np.maximum(v, 0.0)
    if isinstance(cone, Box):
        return np.clip(v, cone.lo if lo is None else lo, cone.hi if hi is None else hi)
    if isinstance(cone, SecondOrder):
        return _project_soc(v)
    if isinstance(cone, PsdReal):
        return _project_psd(v, cone.size)
    raise TypeError(f"unknown cone {cone!r}")


def support_neg(cone: Cone, y: np.ndarray, lo=None, hi=None) -> float:
    """``sup_{s in cone} -<y, s>`` for a dual vector ``y`` (0 for cones when y is in the dual cone)."""
    if isinstance(cone, Box):
        lo = cone.lo if lo is None else lo
        hi = cone.hi if hi is None else hi
        return float(np.sum(np.maximum(-y * lo, -y * hi)))
    return 0.0
