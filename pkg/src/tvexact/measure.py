"""Finite atomic measures and support-reduction utilities."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

TAU_POS = 1e-9
AMP_THRESHOLD = 1e-8


class DomainError(ValueError):
    """A point lies outside the domain of a function or measure."""


class PartialPurificationWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Atom:
    position: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """``sum_k weights[k] * delta(positions[k])`` on a subset of R^dim.

    ``domain`` is an optional closed box ``(lo, hi)`` checked at construction.
    """

    positions: np.ndarray
    weights: np.ndarray
    domain: tuple | None = None

    def __post_init__(self):
        w = np.atleast_1d(np.array(self.weights, dtype=float))
        x = np.array(self.positions, dtype=float)
        if x.ndim == 1:
            x = x.reshape(len(w), -1) if len(w) else x.reshape(0, 1)
        if x.shape[0] != len(w):
            raise ValueError(f"{x.shape[0]} positions for {len(w)} weights")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(x)):
            raise ValueError("atoms must have finite positions and weights")
        if self.domain is not None and len(w):
            lo, hi = (np.broadcast_to(np.asarray(v, float), (x.shape[1],)) for v in self.domain)
            if np.any(x < lo) or np.any(x > hi):
                raise DomainError("atom position outside the declared domain box")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empty(cls, dim: int = 1, domain=None):
        return cls(np.zeros((0, dim)), np.zeros(0), domain)

    @classmethod
    def from_atoms(cls, atoms, dim: int | None = None, domain=None):
        atoms = list(atoms)
        if not atoms:
            return cls.empty(dim or 1, domain)
        pos = np.array([np.atleast_1d(a.position) for a in atoms], dtype=float)
        return cls(pos, np.array([a.weight for a in atoms], dtype=float), domain)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def atoms(self) -> list[Atom]:
        return [Atom(p.copy(), float(w)) for p, w in zip(self.positions, self.weights)]

    def sorted(self) -> "DiscreteMeasure":
        order = np.lexsort(self.positions.T[::-1]) if len(self) else np.arange(0)
        return DiscreteMeasure(self.positions[order], self.weights[order], self.domain)

    def drop_small(self, threshold: float = AMP_THRESHOLD) -> "DiscreteMeasure":
        keep = np.abs(self.weights) >= threshold
        return DiscreteMeasure(self.positions[keep], self.weights[keep], self.domain)

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        return DiscreteMeasure(
            np.vstack([self.positions, other.positions]),
            np.concatenate([self.weights, other.weights]),
            self.domain,
        )


def tv_norm(mu: DiscreteMeasure) -> float:
    return float(np.sum(np.abs(mu.weights)))


def pair(mu: DiscreteMeasure, f, domain=None) -> float:
    """``sum_k d_k f(x_k)``.

    ``f`` is called on each position (a length-``dim`` array; scalars for
    dim 1). ``domain`` is an optional closed box for ``f``.
    """
    if domain is not None and len(mu):
        lo, hi = domain
        if np.any(mu.positions < np.asarray(lo)) or np.any(mu.positions > np.asarray(hi)):
            raise DomainError("atom outside the function's domain")
    vals = [f(p[0] if mu.dim == 1 else p) for p in mu.positions]
    return float(np.dot(mu.weights, vals)) if vals else 0.0


def coalesce(mu: DiscreteMeasure, tau: float = TAU_POS) -> DiscreteMeasure:
    """Merge atoms closer than ``tau`` (sup norm); drop exact cancellations.

    Merged atoms sit at the |weight|-averaged position, which is the
    weight-averaged position whenever the merged weights share a sign.
    Repeats until stable, so the result is idempotent.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    x, w = mu.positions, mu.weights
    while True:
        k = len(w)
        parent = np.arange(k)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        order = np.argsort(x[:, 0], kind="stable") if k else np.arange(0)
        for a_idx in range(k):
            a = order[a_idx]
            for b_idx in range(a_idx + 1, k):
                b = order[b_idx]
                if x[b, 0] - x[a, 0] > tau:
                    break
                if np.max(np.abs(x[a] - x[b])) <= tau:
                    ra, rb = find(a), find(b)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
        roots = np.array([find(i) for i in range(k)], dtype=int)
        uniq = np.unique(roots)
        if len(uniq) == k:
            break
        nx, nw = [], []
        for r in uniq:
            idx = np.flatnonzero(roots == r)
            aw = np.abs(w[idx])
            nw.append(w[idx].sum())
            nx.append(aw @ x[idx] / aw.sum() if aw.sum() > 0 else x[idx[0]])
        x, w = np.array(nx).reshape(len(nw), mu.dim), np.array(nw)
    keep = w != 0.0
    return DiscreteMeasure(x[keep], w[keep], mu.domain)


def merge_group(atoms: list[Atom]) -> Atom:
    """Collapse same-sign atoms into one at their weighted barycenter."""
    if not atoms:
        raise ValueError("cannot merge an empty group")
    w = np.array([a.weight for a in atoms], dtype=float)
    if not (np.all(w > 0) or np.all(w < 0)):
        raise ValueError("merge_group needs weights of one strict sign")
    x = np.array([np.atleast_1d(a.position) for a in atoms], dtype=float)
    total = w.sum()
    return Atom(position=(w @ x) / total, weight=float(total))


@dataclass(frozen=True)
class Region:
    """Closed simplex ``conv(vertices)``; ``vertices`` has shape (d+1, d)."""

    id: int
    vertices: np.ndarray

    def barycentric(self, p) -> np.ndarray:
        V = np.asarray(self.vertices, dtype=float)
        p = np.atleast_1d(np.asarray(p, dtype=float))
        T = (V[1:] - V[0]).T
        lam = np.linalg.solve(T, p - V[0])
        return np.concatenate([[1.0 - lam.sum()], lam])

    def contains(self, p, tol: float = 1e-12) -> bool:
        return bool(np.all(self.barycentric(p) >= -tol))


def sparsify_in_regions(mu: DiscreteMeasure, regions: list[Region], amp_threshold: float = AMP_THRESHOLD,
                        tol: float = 1e-12) -> DiscreteMeasure:
    """Merge same-sign atoms sharing a region into single atoms.

    Atoms on faces shared by several regions go to the region that collects
    the largest same-sign group (ties: larger total |weight|, then smaller
    region id). Each merged group lies in one closed region, so every
    function affine on that region keeps its pairing.
    """
    mu = mu.drop_small(amp_threshold)
    k = len(mu)
    if k == 0:
        return mu
    cand = []
    for i, p in enumerate(mu.positions):
        regs = [r.id for r in regions if r.contains(p, tol)]
        if not regs:
            raise ValueError(f"atom at {p} lies in no region")
        cand.append(set(regs))
    out_x, out_w = [], []
    for sign in (1.0, -1.0):
        free = {i for i in range(k) if np.sign(mu.weights[i]) == sign}
        while free:
            best = None
            for r in sorted({rid for i in free for rid in cand[i]}):
                members = sorted(i for i in free if r in cand[i])
                key = (len(members), float(np.abs(mu.weights[members]).sum()), -r)
                if best is None or key > best[0]:
                    best = (key, members)
            members = best[1]
            atom = merge_group([Atom(mu.positions[i], mu.weights[i]) for i in members])
            out_x.append(atom.position)
            out_w.append(atom.weight)
            free.difference_update(members)
    return DiscreteMeasure(np.array(out_x).reshape(len(out_w), mu.dim), np.array(out_w), mu.domain).sorted()


def purify_support(G, b, u, tol: float = 1e-12) -> np.ndarray:
    """Reduce an l1-optimal solution of ``G u = b`` to at most ``m`` nonzeros.

    Repeatedly steps along a null-space direction of ``G`` restricted to the
    support, in the direction that does not increase ``||u||_1``, until a
    coordinate vanishes.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    u = np.asarray(u, dtype=float).copy()
    b = np.asarray(b, dtype=float)
    m = G.shape[0]
    scale = max(np.max(np.abs(u), initial=0.0), 1e-300)
    u[np.abs(u) <= tol * scale] = 0.0
    while True:
        S = np.flatnonzero(u)
        if len(S) <= m:
            break
        GS = G[:, S]
        _, _, Vt = np.linalg.svd(GS)
        v = Vt[-1]
        if np.linalg.norm(GS @ v) > 1e-8 * max(np.linalg.norm(GS), 1.0):
            warnings.warn(f"null-space step degenerate with support {len(S)} > {m}", PartialPurificationWarning)
            break
        uS = u[S]
        sgn = np.sign(uS)
        slope = float(sgn @ v)

        def first_hit(direction):
            dv = direction * v
            mask = uS * dv < 0
            if not np.any(mask):
                return np.inf, -1
            ratios = np.where(mask, -uS / np.where(mask, dv, 1.0), np.inf)
            j = int(np.argmin(ratios))
            return ratios[j], j

        if abs(slope) > 1e-12 * np.linalg.norm(sgn):
            direction = -np.sign(slope)
            t, j = first_hit(direction)
        else:
            t1, j1 = first_hit(1.0)
            t2, j2 = first_hit(-1.0)
            a1 = abs(uS[j1]) if j1 >= 0 else np.inf
            a2 = abs(uS[j2]) if j2 >= 0 else np.inf
            direction, t, j = (1.0, t1, j1) if a1 <= a2 else (-1.0, t2, j2)
        if j < 0 or not np.isfinite(t):
            warnings.warn("null-space step found no blocking coordinate", PartialPurificationWarning)
            break
        uS = uS + t * direction * v
        uS[j] = 0.0
        uS[np.abs(uS) <= tol * scale] = 0.0
        u[S] = uS
    # re-solve on the final support to remove accumulated rounding
    S = np.flatnonzero(u)
    if len(S):
        GS = G[:, S]
        if np.linalg.matrix_rank(GS) == len(S):
            uS, *_ = np.linalg.lstsq(GS, b, rcond=None)
            if np.all(np.sign(uS) == np.sign(u[S])):
                u[S] = uS
    return u


# ---------------------------------------------------------------- CSV IO

def write_csv(mu: DiscreteMeasure, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{i + 1}" for i in range(mu.dim)] + ["weight"])
        for p, w in zip(mu.positions, mu.weights):
            wr.writerow(["%.17g" % v for v in p] + ["%.17g" % w])


def read_csv(path) -> DiscreteMeasure:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "weight":
        raise ValueError(f"{path}: expected header x1,...,xd,weight")
    dim = len(header) - 1
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), dim + 1)
    return DiscreteMeasure(data[:, :dim], data[:, dim])


def to_rows(mu: DiscreteMeasure) -> list[list[float]]:
    return [list(map(float, p)) + [float(w)] for p, w in zip(mu.positions, mu.weights)]
