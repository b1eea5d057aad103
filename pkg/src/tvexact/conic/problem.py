"""Conic problem container, incremental builder, and plain-text IO.

Standard form::

    minimize    c^T x
    subject to  A x + s = b,   s in K_1 x ... x K_p

Rows of ``A`` are grouped by cone block in the order of ``cones``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .cones import Box, Cone, NonNeg, PsdReal, SecondOrder, Zero


@dataclass(frozen=True)
class ConicProblem:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: tuple[Cone, ...]

    def __post_init__(self):
        n_rows = sum(k.dim for k in self.cones)
        if self.A.shape != (n_rows, len(self.c)):
            raise ValueError(
                f"A has shape {self.A.shape}, cones need {n_rows} rows and c has {len(self.c)} entries"
            )
        if self.b.shape != (n_rows,):
            raise ValueError(f"b has shape {self.b.shape}, expected ({n_rows},)")

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return len(self.b)

    def cone_slices(self) -> list[tuple[Cone, slice]]:
        out, start = [], 0
        for k in self.cones:
            out.append((k, slice(start, start + k.dim)))
            start += k.dim
        return out


@dataclass
class ProblemBuilder:
    """Accumulates variables, cost, and cone-constrained row blocks.

    Each block added with :meth:`add_block` encodes ``A_blk x + s = b_blk`` with
    ``s`` in the given cone. Blocks are emitted in insertion order.
    """

    n_vars: int = 0
    _cost: list = field(default_factory=list)
    _blocks: list = field(default_factory=list)

    def add_variables(self, n: int, cost=None) -> slice:
        sl = slice(self.n_vars, self.n_vars + n)
        self.n_vars += n
        self._cost.append(np.zeros(n) if cost is None else np.broadcast_to(np.asarray(cost, float), (n,)).copy())
        return sl

    def set_cost(self, sl: slice, cost) -> None:
        c = self.cost
        c[sl] = cost
        self._cost = [c]

    @property
    def cost(self) -> np.ndarray:
        return np.concatenate(self._cost) if self._cost else np.zeros(0)

    def add_block(self, cone: Cone, rows: sp.spmatrix | np.ndarray, rhs) -> None:
        """``rows`` may have fewer columns than ``n_vars`` (padded with zeros)."""
        rows = sp.csr_matrix(rows)
        if rows.shape[0] != cone.dim:
            raise ValueError(f"block has {rows.shape[0]} rows for a cone of dim {cone.dim}")
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (cone.dim,)).copy()
        self._blocks.append((cone, rows, rhs))

    def build(self) -> ConicProblem:
        if not self._blocks:
            raise ValueError("problem has no constraints")
        mats = []
        for _, rows, _ in self._blocks:
            if rows.shape[1] > self.n_vars:
                raise ValueError("block references undeclared variables")
            rows = sp.csr_matrix((rows.data, rows.indices, rows.indptr), shape=(rows.shape[0], self.n_vars))
            mats.append(rows)
        A = sp.vstack(mats).tocsc()
        A.eliminate_zeros()
        A.sort_indices()
        b = np.concatenate([r for _, _, r in self._blocks])
        return ConicProblem(c=self.cost, A=A, b=b, cones=tuple(k for k, _, _ in self._blocks))


def selector(n_total: int, sl: slice, scale=1.0) -> sp.csr_matrix:
    """Rows picking variables ``sl`` out of ``n_total``, times ``scale``."""
    idx = np.arange(n_total)[sl]
    data = np.broadcast_to(np.asarray(scale, float), idx.shape)
    return sp.csr_matrix((data, (np.arange(len(idx)), idx)), shape=(len(idx), n_total))


# ---------------------------------------------------------------- text IO

def _fmt(x: float) -> str:
    return "%.16e" % x


def _cone_line(k: Cone) -> str:
    if isinstance(k, Box):
        return f"BOX {k.dim} {_fmt(k.lo)} {_fmt(k.hi)}"
    if isinstance(k, PsdReal):
        return f"PSD {k.size}"
    return f"{k.kind} {k.dim}"


def _parse_cone(tokens: list[str]) -> Cone:
    kind, dim = tokens[0], int(tokens[1])
    if kind == "ZERO":
        return Zero(dim)
    if kind == "NONNEG":
        return NonNeg(dim)
    if kind == "SOC":
        return SecondOrder(dim)
    if kind == "PSD":
        return PsdReal(dim)
    if kind == "BOX":
        return Box(dim, float(tokens[2]), float(tokens[3]))
    raise ValueError(f"unknown cone kind {kind!r}")


def dumps(p: ConicProblem) -> str:
    coo = p.A.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{p.n_vars} {p.n_rows} {len(p.cones)}", " ".join(_fmt(v) for v in p.c)]
    lines += [f"{coo.row[i]} {coo.col[i]} {_fmt(coo.data[i])}" for i in order]
    lines.append(" ".join(_fmt(v) for v in p.b))
    lines += [_cone_line(k) for k in p.cones]
    return "\n".join(lines) + "\n"


def loads(text: str) -> ConicProblem:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    n_vars, n_rows, n_cones = (int(t) for t in lines[0].split())
    c = np.array([float(t) for t in lines[1].split()])
    if len(c) != n_vars:
        raise ValueError("objective length does not match header")
    rows, cols, vals = [], [], []
    i = 2
    while True:
        tok = lines[i].split()
        if len(tok) == 3 and tok[0].isdigit() and tok[1].isdigit():
            rows.append(int(tok[0]))
            cols.append(int(tok[1]))
            vals.append(float(tok[2]))
            i += 1
        else:
            break
    b = np.array([float(t) for t in lines[i].split()])
    if len(b) != n_rows:
        raise ValueError("rhs length does not match header")
    cones = tuple(_parse_cone(ln.split()) for ln in lines[i + 1:])
    if len(cones) != n_cones:
        raise ValueError("cone count does not match header")
    A = sp.csc_matrix((vals, (rows, cols)), shape=(n_rows, n_vars))
    return ConicProblem(c=c, A=A, b=b, cones=cones)


def save(p: ConicProblem, path) -> None:
    Path(path).write_text(dumps(p))


def load(path) -> ConicProblem:
    return loads(Path(path).read_text())
