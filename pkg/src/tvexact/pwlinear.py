"""Simplicial meshes, piecewise-linear measurement functions and the vertex primal."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conic.admm import SolverSettings
from .fidelity import EqualityTo
from .finite import PrimalResult, solve_dual, solve_primal
from .measure import (AMP_THRESHOLD, DiscreteMeasure, DomainError, PartialPurificationWarning, Region,
                      purify_support, sparsify_in_regions)

log = logging.getLogger(__name__)

LOCATE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    """Vertices ``(nv, d)`` and cells ``(nc, d+1)`` of vertex indices."""

    vertices: np.ndarray
    cells: np.ndarray
    _bins: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        C = np.asarray(self.cells, dtype=int)
        d = V.shape[1]
        if C.ndim != 2 or C.shape[1] != d + 1:
            raise ValueError(f"cells of a {d}-dimensional mesh need {d + 1} vertices")
        if C.size and (C.min() < 0 or C.max() >= len(V)):
            raise ValueError("cell references a missing vertex")
        used = np.zeros(len(V), dtype=bool)
        used[C.ravel()] = True
        if not used.all():
            raise ValueError("every vertex must belong to a cell")
        for cell in C:
            T = V[cell[1:]] - V[cell[0]]
            if abs(np.linalg.det(T)) < 1e-14:
                raise ValueError(f"degenerate cell {cell.tolist()}")
        V.setflags(write=False)
        C.setflags(write=False)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "cells", C)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def regions(self) -> list[Region]:
        return [Region(k, self.vertices[c]) for k, c in enumerate(self.cells)]

    def _bin_index(self):
        """Uniform bins over the bounding box, each listing the cells that overlap it."""
        if "cells" not in self._bins:
            lo, hi = self.bounds
            nb = max(1, int(round(len(self.cells) ** (1.0 / self.dim))))
            width = np.where(hi > lo, (hi - lo) / nb, 1.0)
            table: dict[tuple, list[int]] = {}
            for k, c in enumerate(self.cells):
                cl = self.vertices[c].min(axis=0)
                ch = self.vertices[c].max(axis=0)
                i0 = np.clip(np.floor((cl - lo) / width - 1e-9).astype(int), 0, nb - 1)
                i1 = np.clip(np.floor((ch - lo) / width + 1e-9).astype(int), 0, nb - 1)
                for idx in np.ndindex(*(i1 - i0 + 1)):
                    table.setdefault(tuple(i0 + np.array(idx)), []).append(k)
            self._bins.update(cells=table, lo=lo, width=width, nb=nb)
        return self._bins

    def locate(self, x, accelerate: bool = True) -> tuple[int, np.ndarray]:
        """Containing cell (lowest index among ties) and barycentric coordinates of ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if accelerate:
            b = self._bin_index()
            key = tuple(np.clip(np.floor((x - b["lo"]) / b["width"]).astype(int), 0, b["nb"] - 1))
            cand = sorted(b["cells"].get(key, []))
        else:
            cand = range(len(self.cells))
        for k in cand:
            lam = _barycentric(self.vertices[self.cells[k]], x)
            if np.all(lam >= -LOCATE_TOL):
                return k, np.clip(lam, 0.0, None) / np.clip(lam, 0.0, None).sum()
        if accelerate:
            return self.locate(x, accelerate=False)
        raise DomainError(f"point {x} lies outside the mesh")

    def interpolation_matrix(self, points) -> np.ndarray:
        """``W[k, v]``: barycentric weight of vertex ``v`` for point ``k``."""
        P = np.asarray(points, dtype=float).reshape(-1, self.dim)
        W = np.zeros((len(P), self.n_vertices))
        for k, p in enumerate(P):
            cell, lam = self.locate(p)
            W[k, self.cells[cell]] = lam
        return W


def _barycentric(V, x):
    T = (V[1:] - V[0]).T
    lam = np.linalg.solve(T, x - V[0])
    return np.concatenate([[1.0 - lam.sum()], lam])


def uniform_mesh_1d(n_cells: int, lo: float = 0.0, hi: float = 1.0) -> SimplicialMesh:
    if n_cells < 1:
        raise ValueError("need at least one cell")
    v = np.linspace(lo, hi, n_cells + 1)
    return SimplicialMesh(v[:, None], np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)]))


def uniform_mesh_2d(n: int, lo: float = 0.0, hi: float = 1.0) -> SimplicialMesh:
    """``n x n`` squares, each cut along its lower-left to upper-right diagonal."""
    if n < 1:
        raise ValueError("need at least one square per side")
    g = np.linspace(lo, hi, n + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    V = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):  # column i (x), row j (y)
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1)
            cells.append([a, b, d])
            cells.append([a, d, c])
    return SimplicialMesh(V, np.array(cells))


@dataclass(frozen=True, eq=False)
class PwLinearFn:
    mesh: SimplicialMesh
    vertex_values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertex_values, dtype=float)
        if v.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} vertex values, got {v.shape}")
        object.__setattr__(self, "vertex_values", v)

    def __call__(self, x):
        return eval_pwl(self, x)


def eval_pwl(f: PwLinearFn, x) -> float:
    cell, lam = f.mesh.locate(x)
    return float(lam @ f.vertex_values[f.mesh.cells[cell]])


def value_matrix(rho_list, mesh: SimplicialMesh) -> np.ndarray:
    """``R[i, v] = rho_i(vertex v)``."""
    if not rho_list:
        return np.zeros((0, mesh.n_vertices))
    return np.vstack([r.vertex_values for r in rho_list])


def assemble_M(kernel_cols, rho_list, nodes) -> np.ndarray:
    """``[<a_i, lambda_k>, rho_i(x_j)]``; ``kernel_cols`` is ``m x r`` (or None)."""
    m = len(rho_list)
    Mk = np.zeros((m, 0)) if kernel_cols is None else np.asarray(kernel_cols, dtype=float).reshape(m, -1)
    if m == 0:
        return Mk
    mesh = rho_list[0].mesh
    W = mesh.interpolation_matrix(nodes) if len(np.atleast_1d(nodes)) else np.zeros((0, mesh.n_vertices))
    return np.hstack([Mk, value_matrix(rho_list, mesh) @ W.T])


def linearize(a, mesh: SimplicialMesh) -> PwLinearFn:
    """Vertex sampling of an evaluable ``a``: the piecewise-linear interpolant."""
    pts = mesh.vertices[:, 0] if mesh.dim == 1 else mesh.vertices
    return PwLinearFn(mesh, np.array([a(p) for p in pts], dtype=float))


def random_pwl_measurements(mesh: SimplicialMesh, m: int, rng) -> list[PwLinearFn]:
    """``m`` functions with i.i.d. standard normal vertex values."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.Generator(np.random.Philox(rng))
    vals = rng.standard_normal((m, mesh.n_vertices))
    return [PwLinearFn(mesh, v) for v in vals]


# ---------------------------------------------------------------- vertex primal

@dataclass
class VertexSolution:
    measure: DiscreteMeasure  # vertex-supported, after thresholding and optional purification
    raw: DiscreteMeasure  # vertex-supported, straight from the solver
    c: np.ndarray
    objective: float
    result: PrimalResult
    purified: bool


def solve_vertex_primal(mesh: SimplicialMesh, rho_list, f, kernel_cols=None, settings: SolverSettings | None = None,
                        purify: bool = True, amp_threshold: float = AMP_THRESHOLD, zero_sum: bool = False,
                        raise_on_failure: bool = False) -> VertexSolution:
    """``min f(Mk c + R d) + ||d||_1`` with one candidate atom per mesh vertex."""
    R = value_matrix(rho_list, mesh)
    m = R.shape[0]
    Mk = np.zeros((m, 0)) if kernel_cols is None else np.asarray(kernel_cols, dtype=float).reshape(m, -1)
    res = solve_primal(Mk, R, f, settings, zero_sum=zero_sum, raise_on_failure=raise_on_failure)
    d = res.d.copy()
    raw = DiscreteMeasure(mesh.vertices, d)
    d[np.abs(d) < amp_threshold] = 0.0
    purified = False
    if purify and isinstance(f, EqualityTo) and np.count_nonzero(d) > m and not zero_sum:
        with warnings.catch_warnings():
            warnings.simplefilter("always", PartialPurificationWarning)
            d = purify_support(R, f.b - Mk @ res.c, d)
        purified = True
    keep = d != 0.0
    mu = DiscreteMeasure(mesh.vertices[keep], d[keep])
    obj = res.objective
    if purified:
        obj = float(np.sum(np.abs(d)))
    return VertexSolution(mu, raw, res.c, obj, res, purified)


def solve_vertex_dual(mesh: SimplicialMesh, rho_list, f, kernel_cols=None, settings: SolverSettings | None = None,
                      zero_sum: bool = False):
    """Finite LP-type dual: ``max -f*(q)`` with ``|sum_i q_i rho_i| <= 1`` at every vertex."""
    R = value_matrix(rho_list, mesh)
    m = R.shape[0]
    Mk = np.zeros((m, 0)) if kernel_cols is None else np.asarray(kernel_cols, dtype=float).reshape(m, -1)
    return solve_dual(Mk, R, f, settings, zero_sum=zero_sum)


def sparsify_solution(mu: DiscreteMeasure, mesh: SimplicialMesh, amp_threshold: float = AMP_THRESHOLD):
    return sparsify_in_regions(mu, mesh.regions(), amp_threshold)


def measure_pwl(mu: DiscreteMeasure, rho_list, kernel_cols=None, c=None) -> np.ndarray:
    """Forward map ``b_i = <rho_i, mu> + (Mk c)_i``."""
    m = len(rho_list)
    if len(mu) and m:
        W = rho_list[0].mesh.interpolation_matrix(mu.positions)
        b = value_matrix(rho_list, rho_list[0].mesh) @ (W.T @ mu.weights)
    else:
        b = np.zeros(m)
    if kernel_cols is not None and c is not None and len(c):
        b = b + np.asarray(kernel_cols, float).reshape(m, -1) @ np.asarray(c, float)
    return b


# ---------------------------------------------------------------- IO

def write_mesh(mesh: SimplicialMesh, path) -> None:
    lines = [str(mesh.dim), str(mesh.n_vertices)]
    lines += [" ".join("%.17g" % v for v in row) for row in mesh.vertices]
    lines.append(str(len(mesh.cells)))
    lines += [" ".join(str(i) for i in row) for row in mesh.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> SimplicialMesh:
    tok = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    dim, nv = int(tok[0][0]), int(tok[1][0])
    V = np.array([[float(t) for t in row] for row in tok[2: 2 + nv]]).reshape(nv, dim)
    nc = int(tok[2 + nv][0])
    C = np.array([[int(t) for t in row] for row in tok[3 + nv: 3 + nv + nc]]).reshape(nc, dim + 1)
    return SimplicialMesh(V, C)


def write_functions_csv(rho_list, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        for r in rho_list:
            wr.writerow(["%.17g" % v for v in r.vertex_values])


def read_functions_csv(path, mesh: SimplicialMesh) -> list[PwLinearFn]:
    with open(path, newline="") as fh:
        return [PwLinearFn(mesh, [float(v) for v in row]) for row in csv.reader(fh) if row]
