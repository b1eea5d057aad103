"""Real trigonometric polynomials on the torus and the dual SDP route.

Conventions: ``p(t) = sum_{j=-K}^{K} c_j exp(-2 pi i j t)`` with
``c_{-j} = conj(c_j)``; coefficient arrays are indexed ``j + K``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic.cones import Zero
from .conic.hermitian import HermitianBlock
from .conic.problem import ConicProblem, ProblemBuilder, selector

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
IMAG_TOL = 1e-8


class SymmetryError(ValueError):
    pass


class ContinuumCertificateError(RuntimeError):
    """The certificate has modulus one everywhere, so its unit set is the whole torus."""


def _symmetrize(c: np.ndarray, tol: float) -> np.ndarray:
    """Check ``c[::-1] == conj(c)`` along axis 0 and return the exact projection."""
    mirror = np.conj(c[::-1])
    scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
    if np.max(np.abs(c - mirror), initial=0.0) > tol * scale:
        raise SymmetryError("coefficients are not Hermitian-symmetric (c_{-j} != conj(c_j))")
    return 0.5 * (c + mirror)


@dataclass(frozen=True, eq=False)
class TrigPoly:
    K: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (2 * self.K + 1,):
            raise ValueError(f"degree {self.K} needs {2 * self.K + 1} coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", _symmetrize(c, HERMITIAN_TOL))

    @classmethod
    def from_real(cls, K, cos=None, sin=None, const=0.0):
        """``const + sum_j cos_j cos(2 pi j t) + sin_j sin(2 pi j t)`` for j = 1..K."""
        c = np.zeros(2 * K + 1, dtype=complex)
        c[K] = const
        cos = np.zeros(K) if cos is None else np.asarray(cos, float)
        sin = np.zeros(K) if sin is None else np.asarray(sin, float)
        # cos(2 pi j t) = (p_j + p_{-j}) / 2,  sin(2 pi j t) = i (p_j - p_{-j}) / 2
        c[K + 1:] = 0.5 * cos + 0.5j * sin
        c[:K] = np.conj(c[K + 1:])[::-1]
        return cls(K, c)

    def derivative_coeffs(self, order: int = 1) -> np.ndarray:
        j = np.arange(-self.K, self.K + 1)
        return self.coeffs * (-2j * np.pi * j) ** order

    def __call__(self, t):
        return eval_trig(self, t)


def _phases(K: int, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    j = np.arange(-K, K + 1)
    return np.exp(-2j * np.pi * np.multiply.outer(t, j))


def eval_complex(coeffs: np.ndarray, t) -> np.ndarray:
    K = (len(coeffs) - 1) // 2
    return _phases(K, np.mod(t, 1.0)) @ coeffs


def eval_trig(p: TrigPoly, t):
    val = eval_complex(p.coeffs, t)
    scale = 1.0 + float(np.sum(np.abs(p.coeffs)))
    if np.max(np.abs(np.imag(val)), initial=0.0) > IMAG_TOL * scale:
        raise SymmetryError("trigonometric polynomial has a non-negligible imaginary part")
    val = np.real(val)
    return val if np.ndim(val) else float(val)


@dataclass(frozen=True, eq=False)
class GammaMatrix:
    """Columns are the coefficient vectors of ``rho_1..rho_m``; rows ``j = -K..K``."""

    K: int
    entries: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.entries, dtype=complex)
        if g.ndim != 2 or g.shape[0] != 2 * self.K + 1:
            raise ValueError(f"Gamma must have {2 * self.K + 1} rows, got shape {g.shape}")
        object.__setattr__(self, "entries", _symmetrize(g, HERMITIAN_TOL))

    @property
    def m(self) -> int:
        return self.entries.shape[1]

    def column(self, i: int) -> TrigPoly:
        return TrigPoly(self.K, self.entries[:, i])

    def truncate(self, K: int) -> "GammaMatrix":
        if K > self.K:
            raise ValueError(f"cannot truncate degree {self.K} to {K}")
        return GammaMatrix(K, self.entries[self.K - K: self.K + K + 1])

    def eval_matrix(self, t) -> np.ndarray:
        """``R[k, i] = rho_i(t_k)``."""
        return np.real(_phases(self.K, np.mod(np.atleast_1d(t), 1.0)) @ self.entries)

    def kernel_row(self) -> np.ndarray:
        """Measurements of the constant function 1, i.e. the ``j = 0`` row."""
        return np.real(self.entries[self.K]).copy()


def write_gamma_csv(G: GammaMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["j"] + [f"{p}{i + 1}" for i in range(G.m) for p in ("re", "im")])
        for row, j in enumerate(range(-G.K, G.K + 1)):
            vals = np.empty(2 * G.m)
            vals[0::2] = G.entries[row].real
            vals[1::2] = G.entries[row].imag
            wr.writerow([j] + ["%.17g" % v for v in vals])


def read_gamma_csv(path) -> GammaMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    data = np.array([[float(v) for v in r[1:]] for r in rows])
    js = [int(r[0]) for r in rows]
    K = (len(rows) - 1) // 2
    if js != list(range(-K, K + 1)):
        raise ValueError(f"{path}: rows must be j = -K..K in order")
    return GammaMatrix(K, data[:, 0::2] + 1j * data[:, 1::2])


# ---------------------------------------------------------------- dual SDP

@dataclass(frozen=True)
class DualSDP:
    """The assembled conic problem plus where to find ``q`` and the constant."""

    problem: ConicProblem
    q: slice
    kappa: int | None
    K: int


def _q_and_constant(bld, m, free_constant):
    q = bld.add_variables(m)
    kappa = bld.add_variables(1).start if free_constant else None
    return q, kappa


def _hermitian_params(bld, size):
    """Variables for the lower triangle of a Hermitian matrix: (re index, im index) maps."""
    re_idx, im_idx = {}, {}
    for b in range(size):
        for a in range(b, size):
            re_idx[(a, b)] = bld.add_variables(1).start
            if a > b:
                im_idx[(a, b)] = bld.add_variables(1).start
    return re_idx, im_idx


def _fill_block(H, re_idx, im_idx):
    for (a, b), v in re_idx.items():
        H.add(a, b, v, 1.0)
    for (a, b), v in im_idx.items():
        H.add(a, b, v, 1j)


class _Rows:
    """Sparse equality rows accumulated one at a time."""

    def __init__(self):
        self.rows, self.cols, self.vals, self.rhs = [], [], [], []

    def add(self, terms, rhs):
        r = len(self.rhs)
        for col, val in terms:
            if val != 0:
                self.rows.append(r)
                self.cols.append(col)
                self.vals.append(val)
        self.rhs.append(rhs)

    def block(self, bld):
        r = len(self.rhs)
        if r:
            A = sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(r, bld.n_vars))
            bld.add_block(Zero(r), A, self.rhs)


def _kernel_rows(rows: _Rows, q: slice, kernel_rows, m):
    for v in kernel_rows or []:
        v = np.asarray(v, dtype=float)
        if v.shape != (m,):
            raise ValueError("kernel rows must have one entry per measurement")
        rows.add([(q.start + i, v[i]) for i in np.flatnonzero(v)], 0.0)


def assemble_dual_sdp(G: GammaMatrix, kernel_rows, f, free_constant: bool = False,
                      formulation: str = "bounded_real") -> DualSDP:
    """Conic form of ``min f*(q)`` subject to ``||sum_i q_i rho_i + kappa||_inf <= 1``.

    ``formulation="bounded_real"``: with ``c = G q`` (plus ``kappa`` on the
    ``j = 0`` entry) there is a Hermitian ``Q`` of order ``2K+1`` with
    ``[[Q, c], [c^*, 1]] >= 0``, unit trace and zero sums on every
    off-diagonal.

    ``formulation="gram"``: ``1 - eta`` and ``1 + eta`` are nonnegative
    trigonometric polynomials, each written as ``v(z)^* P v(z)`` with a
    Hermitian PSD ``P`` of order ``K+1``. Two blocks of half the order; valid
    because ``eta`` is real.

    ``kernel_rows`` adds ``<q, r> = 0`` per row. ``kappa`` is a free scalar
    only when ``free_constant`` is set (zero-mean primal atoms).
    """
    if not hasattr(f, "conjugate_encoding"):
        raise TypeError(f"unsupported fidelity {type(f).__name__}")
    K, m = G.K, G.m
    if f.m != m:
        raise ValueError(f"fidelity has {f.m} entries for {m} measurements")
    bld = ProblemBuilder()
    q, kappa = _q_and_constant(bld, m, free_constant)
    eq = _Rows()
    blocks = []
    if formulation == "bounded_real":
        n = 2 * K + 1
        re_idx, im_idx = _hermitian_params(bld, n)
        H = HermitianBlock(n + 1)
        _fill_block(H, re_idx, im_idx)
        for a in range(n):
            for i in np.flatnonzero(G.entries[a]):
                H.add(n, a, q.start + i, np.conj(G.entries[a, i]))
        if kappa is not None:
            H.add(n, K, kappa, 1.0)
        H.add_const(n, n, 1.0)
        blocks.append(H)
        for j in range(n):
            eq.add([(re_idx[(b + j, b)], 1.0) for b in range(n - j)], 1.0 if j == 0 else 0.0)
            if j > 0:
                eq.add([(im_idx[(b + j, b)], 1.0) for b in range(n - j)], 0.0)
    elif formulation == "gram":
        n = K + 1
        for sgn in (-1.0, 1.0):
            re_idx, im_idx = _hermitian_params(bld, n)
            H = HermitianBlock(n)
            _fill_block(H, re_idx, im_idx)
            blocks.append(H)
            # sum_b P[b+j, b] = conj(r_j),  r = delta_0 + sgn * (G q + kappa e_0)
            for j in range(n):
                gq = G.entries[K + j]
                re_terms = [(re_idx[(b + j, b)], 1.0) for b in range(n - j)]
                re_terms += [(q.start + i, -sgn * gq[i].real) for i in range(m)]
                if kappa is not None and j == 0:
                    re_terms.append((kappa, -sgn))
                eq.add(re_terms, 1.0 if j == 0 else 0.0)
                if j > 0:
                    im_terms = [(im_idx[(b + j, b)], 1.0) for b in range(n - j)]
                    im_terms += [(q.start + i, sgn * gq[i].imag) for i in range(m)]
                    eq.add(im_terms, 0.0)
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    _kernel_rows(eq, q, kernel_rows, m)
    f.conjugate_encoding().attach(bld, selector(bld.n_vars, q))
    eq.block(bld)
    for H in blocks:
        A_psd, b_psd = H.psd_rows(bld.n_vars)
        bld.add_block(H.cone, A_psd, b_psd)
    return DualSDP(bld.build(), q, kappa, K)


def certificate_poly(q, G: GammaMatrix, kappa: float = 0.0) -> TrigPoly:
    c = G.entries @ np.asarray(q, dtype=float)
    c[G.K] += kappa
    return TrigPoly(G.K, c)


# ---------------------------------------------------------------- roots

@dataclass(frozen=True)
class CertificateRoots:
    positions: np.ndarray
    moduli: np.ndarray

    def __len__(self):
        return len(self.positions)


def torus_dist(a, b):
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b), 1.0))
    return np.minimum(d, 1.0 - d)


def _polish(c, t, iters=30):
    """Newton steps on ``d/dt |p(t)|^2 = 0`` from ``t``; returns the refined point."""
    K = (len(c) - 1) // 2
    j = np.arange(-K, K + 1)
    w = -2j * np.pi * j
    c1, c2 = c * w, c * w * w
    step_cap = 0.25 / max(K, 1)
    t0 = t
    for _ in range(iters):
        ph = _phases(K, t)
        p, p1, p2 = ph @ c, ph @ c1, ph @ c2
        d1 = 2.0 * np.real(p1 * np.conj(p))
        d2 = 2.0 * (abs(p1) ** 2 + np.real(p2 * np.conj(p)))
        if d2 >= 0:
            # not locally concave: this is no maximum of |p|
            break
        dt = -d1 / d2
        dt = float(np.clip(dt, -step_cap, step_cap))
        t = t + dt
        if abs(dt) < 1e-15:
            break
    if torus_dist(t, t0) > 0.5 / max(K, 1):
        return t0
    return float(np.mod(t, 1.0))


def unit_modulus_polynomial(c: np.ndarray) -> np.ndarray:
    """Coefficients (highest power first) of ``z^{2K} (1 - |p|^2)`` with ``z = exp(-2 pi i t)``."""
    K = (len(c) - 1) // 2
    P = np.convolve(c, np.conj(c[::-1]))  # index k + 2K holds sum_j c_j conj(c_{j-k})
    g = -P
    g[2 * K] += 1.0
    return g[::-1]


def find_unit_modulus_roots(eta: TrigPoly, root_tol_radius: float = 1e-3, root_tol_value: float = 1e-6,
                            cluster_tol: float = 1e-5) -> CertificateRoots:
    """Points where ``|eta| = 1`` via companion-matrix roots of ``1 - |eta|^2``.

    Unit-modulus roots of a nonnegative trigonometric polynomial are double, so
    a coefficient perturbation of size ``e`` moves them off the circle by about
    ``sqrt(e)``; ``root_tol_radius`` is the annulus kept before Newton
    polishing of the maximum of ``|eta|``.
    """
    c = eta.coeffs
    K = eta.K
    nonconst = np.delete(c, K)
    if np.max(np.abs(nonconst), initial=0.0) <= 1e-12 * max(1.0, abs(c[K])):
        if abs(abs(c[K]) - 1.0) <= root_tol_value:
            raise ContinuumCertificateError("certificate is constant with modulus 1")
        return CertificateRoots(np.zeros(0), np.zeros(0))
    coeffs = unit_modulus_polynomial(c)
    scale = np.max(np.abs(coeffs))
    nz = np.flatnonzero(np.abs(coeffs) > 1e-14 * scale)
    coeffs = coeffs[nz[0]: nz[-1] + 1]  # deflate leading and trailing zeros
    z = np.roots(coeffs) if len(coeffs) > 1 else np.zeros(0, dtype=complex)
    z = z[np.abs(np.abs(z) - 1.0) <= root_tol_radius]
    cand = np.mod(-np.angle(z) / (2 * np.pi), 1.0)
    cand = np.array([_polish(c, t) for t in cand])
    if len(cand) == 0:
        return CertificateRoots(np.zeros(0), np.zeros(0))
    mod = np.abs(eval_complex(c, cand))
    keep = mod >= 1.0 - root_tol_value
    cand, mod = cand[keep], mod[keep]
    order = np.argsort(cand)
    cand, mod = cand[order], mod[order]
    # cluster conjugate pairs and duplicates, including across t = 0
    groups: list[list[int]] = []
    for i in range(len(cand)):
        if groups and torus_dist(cand[i], cand[groups[-1][-1]]) <= cluster_tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    if len(groups) > 1 and torus_dist(cand[groups[0][0]], cand[groups[-1][-1]]) <= cluster_tol:
        groups[0] = groups.pop() + groups[0]
    best = [g[int(np.argmax(mod[g]))] for g in groups]
    pos, mods = cand[best], mod[best]
    order = np.argsort(pos)
    return CertificateRoots(pos[order], mods[order])


def measure_with_trig(mu, G: GammaMatrix, c=None, kernel_rows=None) -> np.ndarray:
    """``b_i = <rho_i, mu> + sum_k c_k r_k[i]``."""
    if len(mu):
        b = G.eval_matrix(mu.positions[:, 0]).T @ mu.weights
    else:
        b = np.zeros(G.m)
    if c is not None and len(c):
        b = b + np.column_stack([np.asarray(r, float) for r in kernel_rows]) @ np.asarray(c, float)
    return b


# ---------------------------------------------------------------- dual solve

@dataclass
class DualResult:
    q: np.ndarray
    kappa: float
    value: float
    solution: object
    reduced: bool


def _constraint_map(G: GammaMatrix, kernel_rows) -> np.ndarray:
    rows = [G.entries.real, G.entries.imag] + [np.atleast_2d(np.asarray(v, float)) for v in kernel_rows or []]
    return np.vstack(rows)


def solve_dual_sdp(G: GammaMatrix, kernel_rows, f, settings=None, free_constant: bool = False,
                   formulation: str = "gram") -> DualResult:
    """Solve the certificate problem and return ``q`` maximizing ``-f*(q)``.

    For a quadratic fidelity with a scalar weight, the directions of ``q``
    invisible to the constraints (null space of ``q -> (G q, kernel rows)``)
    are minimized in closed form first. Otherwise those directions are only
    held by the quadratic term and first-order solvers crawl.
    """
    from .conic.admm import solve
    from .fidelity import Quadratic

    m = G.m
    T = _constraint_map(G, kernel_rows)
    _, sv, Vt = np.linalg.svd(T, full_matrices=True)
    rank = int(np.sum(sv > 1e-10 * max(sv[0], 1e-300))) if len(sv) else 0
    scalar_c = isinstance(f, Quadratic) and np.all(f.C == f.C[0])
    if rank < m and scalar_c:
        R, N = Vt[:rank].T, Vt[rank:].T
        lam, cc = f.lam, float(f.C[0])
        q_n = -(lam / cc ** 2) * (N @ (N.T @ f.b))
        const = float(q_n @ f.b + cc ** 2 * (q_n @ q_n) / (2 * lam))
        Gr = GammaMatrix(G.K, G.entries @ R)
        kr = [R.T @ np.asarray(v, float) for v in kernel_rows or []]
        fr = Quadratic(lam, R.T @ f.b, np.full(rank, cc))
        sdp = assemble_dual_sdp(Gr, kr, fr, free_constant, formulation)
        sol = solve(sdp.problem, settings)
        q = R @ sol.x[sdp.q] + q_n
        value = -(sol.objective + const)
        reduced = True
    else:
        sdp = assemble_dual_sdp(G, kernel_rows, f, free_constant, formulation)
        sol = solve(sdp.problem, settings)
        q = sol.x[sdp.q]
        value = -sol.objective
        reduced = False
    kappa = float(sol.x[sdp.kappa]) if sdp.kappa is not None else 0.0
    return DualResult(q, kappa, value, sol, reduced)
