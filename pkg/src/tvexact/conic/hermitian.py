"""Real embedding of complex Hermitian PSD constraints.

A Hermitian ``H = R + iI`` is PSD iff ``[[R, -I], [I, R]]`` is PSD; every
eigenvalue of ``H`` appears twice in the embedding. Trace convention:
``tr(H G) = tr(E(H) E(G)) / 2`` for Hermitian ``H, G``.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np
import scipy.sparse as sp

from .cones import SQRT2, PsdReal, svec_position


def hermitian_embed(H: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Return the real ``2s x 2s`` embedding of a numeric Hermitian matrix."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("expected a square matrix")
    if np.max(np.abs(H - H.conj().T), initial=0.0) > tol * max(1.0, np.max(np.abs(H), initial=0.0)):
        raise ValueError("matrix is not Hermitian")
    R, I = H.real, H.imag
    return np.block([[R, -I], [I, R]])


class HermitianBlock:
    """Affine Hermitian matrix ``H(x) = H0 + sum_k x_k H_k`` described entrywise.

    Terms are added for the lower triangle only (``i >= j``); the upper triangle
    is implied by Hermitian symmetry. :meth:`psd_rows` turns the constraint
    ``H(x) >= 0`` into a ``PsdReal(2 size)`` block ``A x + s = b``.
    """

    def __init__(self, size: int):
        self.size = size
        self._lin = defaultdict(complex)  # (i, j, var) -> coefficient
        self._const = defaultdict(complex)  # (i, j) -> constant

    def add(self, i: int, j: int, var: int, coeff: complex) -> None:
        if i < j:
            i, j, coeff = j, i, np.conj(coeff)
        if i == j and abs(np.imag(coeff)) > 0:
            raise ValueError("diagonal entries of a Hermitian matrix are real")
        self._lin[(i, j, var)] += coeff

    def add_const(self, i: int, j: int, value: complex) -> None:
        if i < j:
            i, j, value = j, i, np.conj(value)
        if i == j and abs(np.imag(value)) > 0:
            raise ValueError("diagonal entries of a Hermitian matrix are real")
        self._const[(i, j)] += value

    @property
    def cone(self) -> PsdReal:
        return PsdReal(2 * self.size)

    def _embedded_entries(self, i, j, val):
        """Lower-triangle entries of the embedding touched by H[i, j] = val (i >= j)."""
        s = self.size
        re, im = float(np.real(val)), float(np.imag(val))
        out = []
        # top-left R and bottom-right R
        if re != 0.0:
            out.append((i, j, re))
            out.append((i + s, j + s, re))
        # bottom-left block holds I: entry (i+s, j) = I[i, j], (j+s, i) = I[j, i] = -I[i, j]
        if im != 0.0 and i != j:
            out.append((i + s, j, im))
            out.append((j + s, i, -im))
        return out

    def psd_rows(self, n_vars: int) -> tuple[sp.csr_matrix, np.ndarray]:
        big = 2 * self.size
        dim = big * (big + 1) // 2
        rows, cols, vals = [], [], []
        for (i, j, var), coeff in self._lin.items():
            for a, bb, val in self._embedded_entries(i, j, coeff):
                scale = 1.0 if a == bb else SQRT2
                rows.append(svec_position(a, bb, big))
                cols.append(var)
                # slack s = b - A x must equal svec(H(x))
                vals.append(-scale * val)
        rhs = np.zeros(dim)
        for (i, j), value in self._const.items():
            for a, bb, val in self._embedded_entries(i, j, value):
                scale = 1.0 if a == bb else SQRT2
                rhs[svec_position(a, bb, big)] += scale * val
        A = sp.csr_matrix((vals, (rows, cols)), shape=(dim, n_vars))
        return A, rhs
