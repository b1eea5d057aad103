"""Convex data-fit terms, their conjugates, and conic epigraph encodings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .conic.cones import Box, NonNeg, SecondOrder, Zero
from .conic.problem import ProblemBuilder

SQRT1_2 = np.sqrt(0.5)


@dataclass(frozen=True)
class Encoding:
    """Conic description of a convex function of an affine expression ``z``.

    The represented value is ``data_cost . z + aux_cost . w`` minimized over
    auxiliary variables ``w`` subject to, for each block,
    ``A_data z + A_aux w + s = rhs`` with ``s`` in the block's cone.
    """

    m: int
    n_aux: int
    data_cost: np.ndarray
    aux_cost: np.ndarray
    blocks: tuple = field(default_factory=tuple)  # (cone, A_data, A_aux, rhs)

    @property
    def cones(self):
        return [blk[0] for blk in self.blocks]

    def attach(self, builder: ProblemBuilder, G, z0=None) -> slice:
        """Add to ``builder`` for ``z = G x + z0`` (``G`` over the builder's current variables)."""
        G = sp.csr_matrix(G)
        if G.shape[0] != self.m:
            raise ValueError(f"expression has {G.shape[0]} rows, fidelity expects {self.m}")
        z0 = np.zeros(self.m) if z0 is None else np.asarray(z0, dtype=float)
        aux = builder.add_variables(self.n_aux, self.aux_cost)
        cost = builder.cost
        cost[: G.shape[1]] += G.T @ self.data_cost
        builder.set_cost(slice(0, builder.n_vars), cost)
        n = builder.n_vars
        Gp = sp.csr_matrix((G.data, G.indices, G.indptr), shape=(self.m, n))
        for cone, A_data, A_aux, rhs in self.blocks:
            rows = sp.csr_matrix(A_data) @ Gp
            if A_aux is not None:
                rows = rows + sp.hstack([sp.csr_matrix((cone.dim, aux.start)), sp.csr_matrix(A_aux)], format="csr")
            builder.add_block(cone, rows, np.asarray(rhs) - sp.csr_matrix(A_data) @ z0)
        return aux


class Fidelity:
    """Base class: ``b`` is the data vector."""

    b: np.ndarray

    @property
    def m(self) -> int:
        return len(self.b)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != self.b.shape:
            raise ValueError(f"expected a vector of length {self.m}, got shape {x.shape}")
        return x

    def with_data(self, b):
        raise NotImplementedError


def _vec(b):
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if b.ndim != 1:
        raise ValueError("data must be a vector")
    return b


def _diag(C, m):
    C = np.ones(m) if C is None else np.broadcast_to(np.asarray(C, dtype=float), (m,)).copy()
    if np.any(C <= 0):
        raise ValueError("diagonal weights must be strictly positive")
    return C


@dataclass(frozen=True, eq=False)
class EqualityTo(Fidelity):
    b: np.ndarray
    tol: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "b", _vec(self.b))

    def eval(self, x) -> float:
        x = self._check(x)
        return 0.0 if np.max(np.abs(x - self.b), initial=0.0) <= self.tol else np.inf

    def conjugate(self, q) -> float:
        return float(self._check(q) @ self.b)

    def conic_encoding(self) -> Encoding:
        m = self.m
        return Encoding(m, 0, np.zeros(m), np.zeros(0), ((Zero(m), sp.identity(m), None, self.b),))

    def conjugate_encoding(self) -> Encoding:
        return Encoding(self.m, 0, self.b.copy(), np.zeros(0), ())

    def with_data(self, b):
        return EqualityTo(b, self.tol)


@dataclass(frozen=True, eq=False)
class Quadratic(Fidelity):
    """``lam/2 * ||C^{-1}(x - b)||^2`` with diagonal ``C``."""

    lam: float
    b: np.ndarray
    C: np.ndarray | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be strictly positive")
        b = _vec(self.b)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "C", _diag(self.C, len(b)))

    def eval(self, x) -> float:
        r = (self._check(x) - self.b) / self.C
        return 0.5 * self.lam * float(r @ r)

    def conjugate(self, q) -> float:
        q = self._check(q)
        Cq = self.C * q
        return float(q @ self.b + Cq @ Cq / (2 * self.lam))

    def conic_encoding(self) -> Encoding:
        # t >= ||u||^2 / 2 with u = sqrt(lam) C^{-1}(z - b):  ((t+1)/sqrt2, u, (t-1)/sqrt2) in SOC
        m = self.m
        k = np.sqrt(self.lam) / self.C
        A_data = sp.vstack([sp.csr_matrix((1, m)), sp.diags(-k), sp.csr_matrix((1, m))])
        A_aux = np.zeros((m + 2, 1))
        A_aux[0, 0] = A_aux[-1, 0] = -SQRT1_2
        rhs = np.concatenate([[SQRT1_2], -k * self.b, [-SQRT1_2]])
        return Encoding(m, 1, np.zeros(m), np.ones(1), ((SecondOrder(m + 2), A_data, A_aux, rhs),))

    def conjugate_encoding(self) -> Encoding:
        # <q, b> + t,  t >= ||C q||^2 / (2 lam)
        m = self.m
        k = self.C / np.sqrt(self.lam)
        A_data = sp.vstack([sp.csr_matrix((1, m)), sp.diags(-k), sp.csr_matrix((1, m))])
        A_aux = np.zeros((m + 2, 1))
        A_aux[0, 0] = A_aux[-1, 0] = -SQRT1_2
        rhs = np.concatenate([[SQRT1_2], np.zeros(m), [-SQRT1_2]])
        return Encoding(m, 1, self.b.copy(), np.ones(1), ((SecondOrder(m + 2), A_data, A_aux, rhs),))

    def with_data(self, b):
        return Quadratic(self.lam, b, self.C)


@dataclass(frozen=True, eq=False)
class L1(Fidelity):
    """``lam * ||x - b||_1``."""

    lam: float
    b: np.ndarray

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be strictly positive")
        object.__setattr__(self, "b", _vec(self.b))

    def eval(self, x) -> float:
        return self.lam * float(np.sum(np.abs(self._check(x) - self.b)))

    def conjugate(self, q) -> float:
        q = self._check(q)
        if np.max(np.abs(q), initial=0.0) > self.lam:
            return np.inf
        return float(q @ self.b)

    def conic_encoding(self) -> Encoding:
        # z - b = p - n,  p, n >= 0,  cost lam * 1^T (p + n)
        m = self.m
        eye = sp.identity(m, format="csr")
        zero_blk = (Zero(m), eye, sp.hstack([-eye, eye]), self.b)
        nn_blk = (NonNeg(2 * m), sp.csr_matrix((2 * m, m)), -sp.identity(2 * m), np.zeros(2 * m))
        return Encoding(m, 2 * m, np.zeros(m), np.full(2 * m, self.lam), (zero_blk, nn_blk))

    def conjugate_encoding(self) -> Encoding:
        m = self.m
        # s = q in [-lam, lam]
        blk = (Box(m, -self.lam, self.lam), -sp.identity(m), None, np.zeros(m))
        return Encoding(m, 0, self.b.copy(), np.zeros(0), (blk,))

    def with_data(self, b):
        return L1(self.lam, b)


@dataclass(frozen=True, eq=False)
class BoxQuant(Fidelity):
    """Indicator of ``||C (x - b)||_inf <= 1`` with diagonal ``C``."""

    b: np.ndarray
    C: np.ndarray | None = None
    tol: float = 0.0

    def __post_init__(self):
        b = _vec(self.b)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "C", _diag(self.C, len(b)))

    def eval(self, x) -> float:
        r = self.C * (self._check(x) - self.b)
        return 0.0 if np.max(np.abs(r), initial=0.0) <= 1.0 + self.tol else np.inf

    def conjugate(self, q) -> float:
        q = self._check(q)
        return float(q @ self.b + np.sum(np.abs(q) / self.C))

    def conic_encoding(self) -> Encoding:
        m = self.m
        blk = (Box(m, -1.0, 1.0), sp.diags(-self.C), None, -self.C * self.b)
        return Encoding(m, 0, np.zeros(m), np.zeros(0), (blk,))

    def conjugate_encoding(self) -> Encoding:
        # <q, b> + sum w_i / C_i,  w - q >= 0,  w + q >= 0
        m = self.m
        eye = sp.identity(m, format="csr")
        A_data = sp.vstack([eye, -eye])
        A_aux = sp.vstack([-eye, -eye])
        blk = (NonNeg(2 * m), A_data, A_aux, np.zeros(2 * m))
        return Encoding(m, m, self.b.copy(), 1.0 / self.C, (blk,))

    def with_data(self, b):
        return BoxQuant(b, self.C, self.tol)


def conic_encoding(f: Fidelity) -> Encoding:
    return f.conic_encoding()


FIDELITY_KINDS = ("equality", "quadratic", "l1", "box")


def make_fidelity(kind: str, b, **params) -> Fidelity:
    """Build a fidelity from a config name; nonconvex kinds are rejected."""
    key = kind.lower().replace("-", "_")
    if key in ("equality", "equality_to"):
        return EqualityTo(b, params.get("tol", 0.0))
    if key == "quadratic":
        return Quadratic(params.get("lam", 1.0), b, params.get("C"))
    if key == "l1":
        return L1(params.get("lam", 1.0), b)
    if key in ("box", "box_quant"):
        return BoxQuant(b, params.get("C"), params.get("tol", 0.0))
    if "phase" in key or key.startswith("abs"):
        raise ValueError(
            f"fidelity {kind!r} is nonconvex; only convex data terms are supported ({', '.join(FIDELITY_KINDS)})"
        )
    raise ValueError(f"unknown fidelity {kind!r}; expected one of {', '.join(FIDELITY_KINDS)}")
