"""Operator-splitting solver for :class:`ConicProblem`.

The iteration follows the OSQP/COSMO splitting: each step solves one
quasi-definite KKT system with a cached sparse LU factorization, projects the
relaxed slack onto the cone product, and takes a dual ascent step. The penalty
is rebalanced every ``adapt_every`` iterations from the ratio of normalized
primal and dual residuals; a change triggers a refactorization.

Returned duals follow the convention ``A^T y + c = 0`` with ``y`` in the dual
cone, so that for pure cones the duality gap is ``c^T x + b^T y``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import Box, NonNeg, PsdReal, SecondOrder, Zero, project_cone, support_neg
from .problem import ConicProblem

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible_flagged"


@dataclass(frozen=True)
class SolverSettings:
    eps_abs: float = 1e-9
    eps_rel: float = 1e-9
    max_iter: int = 200_000
    relaxation: float = 1.8
    rho: float = 1.0
    sigma: float = 1e-6
    adapt_every: int = 100
    check_every: int = 25
    scaling_iters: int = 15
    rho_eq_factor: float = 1e3
    anderson_mem: int = 10
    anderson_safeguard: float = 1.0
    polish: bool = True
    polish_every: int = 1000
    polish_refine: int = 10

    def __post_init__(self):
        if self.eps_abs <= 0 or self.eps_rel <= 0:
            raise ValueError("tolerances must be positive")
        if not 1.0 <= self.relaxation < 2.0:
            raise ValueError("relaxation must lie in [1, 2)")


@dataclass
class ConicSolution:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: Status
    primal_residual: float
    dual_residual: float
    gap: float
    objective: float
    dual_objective: float
    iterations: int
    eps_abs: float
    eps_rel: float

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class SolverError(RuntimeError):
    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


def _block_ids(p: ConicProblem):
    """Per-row block id for blocks that must share one row scale (SOC, PSD)."""
    ids = np.arange(p.n_rows)
    for k, sl in p.cone_slices():
        if isinstance(k, (SecondOrder, PsdReal)):
            ids[sl] = sl.start
    return ids


def _inf_norms(A: sp.csc_matrix, n: int, m: int):
    """Column and row max-abs of a CSC matrix."""
    col, row = np.zeros(n), np.zeros(m)
    if A.nnz:
        a = np.abs(A.data)
        starts = A.indptr[:-1]
        nonempty = np.diff(A.indptr) > 0
        col[nonempty] = np.maximum.reduceat(a, starts[nonempty])
        np.maximum.at(row, A.indices, a)
    return col, row


def _equilibrate(p: ConicProblem, iters: int):
    """Modified Ruiz scaling. Returns (D, E, cost_scale, A_scaled)."""
    A = p.A.tocsc().astype(float)
    n, m = p.n_vars, p.n_rows
    D = np.ones(n)
    E = np.ones(m)
    ids = _block_ids(p)
    uniq, inv = np.unique(ids, return_inverse=True)
    As = A.copy()
    for _ in range(iters):
        col, row = _inf_norms(As, n, m)
        dc = np.where(col > 1e-12, 1.0 / np.sqrt(np.maximum(col, 1e-12)), 1.0)
        # one scale per SOC/PSD block: the mean keeps the cone invariant
        grp = np.bincount(inv, weights=row) / np.bincount(inv)
        row = grp[inv]
        dr = np.where(row > 1e-12, 1.0 / np.sqrt(np.maximum(row, 1e-12)), 1.0)
        dc = np.clip(dc, 1e-4, 1e4)
        dr = np.clip(dr, 1e-4, 1e4)
        D *= dc
        E *= dr
        As.data *= dr[As.indices] * np.repeat(dc, np.diff(As.indptr))
    cD = np.abs(D * p.c)
    cmax = cD.max() if cD.size else 0.0
    gamma = 1.0 / cmax if cmax > 1e-12 else 1.0
    gamma = float(np.clip(gamma, 1e-4, 1e4))
    return D, E, gamma, sp.csc_matrix(As)


class _Workspace:
    def __init__(self, p: ConicProblem, settings: SolverSettings):
        self.p = p
        self.st = settings
        self.D, self.E, self.gamma, self.A = _equilibrate(p, settings.scaling_iters)
        self.AT = self.A.T.tocsc()
        self.b = self.E * p.b
        self.c = self.gamma * self.D * p.c
        self.slices = p.cone_slices()
        self.box_lo = {}
        self.box_hi = {}
        eq = np.zeros(p.n_rows, dtype=bool)
        for k, sl in self.slices:
            if isinstance(k, Zero):
                eq[sl] = True
            elif isinstance(k, Box):
                self.box_lo[sl.start] = self.E[sl] * k.lo
                self.box_hi[sl.start] = self.E[sl] * k.hi
                if k.lo == k.hi:
                    eq[sl] = True
        self.eq = eq
        self.rho_base = settings.rho
        self._factor()

    def rho_vec(self):
        r = np.full(self.p.n_rows, float(self.rho_base))
        r[self.eq] *= self.st.rho_eq_factor
        return r

    def _factor(self):
        n = self.p.n_vars
        self.rho = self.rho_vec()
        K = sp.bmat(
            [
                [self.st.sigma * sp.identity(n, format="csc"), self.AT],
                [self.A, -sp.diags(1.0 / self.rho)],
            ],
            format="csc",
        )
        self.lu = spla.splu(K, permc_spec="COLAMD")

    def project(self, v):
        out = np.empty_like(v)
        for k, sl in self.slices:
            if isinstance(k, Zero):
                out[sl] = 0.0
            elif isinstance(k, Box):
                np.clip(v[sl], self.box_lo[sl.start], self.box_hi[sl.start], out=out[sl])
            else:
                out[sl] = project_cone(k, v[sl])
        return out


def _row_bounds(ws: _Workspace):
    """Scaled per-row bounds ``lo <= s <= hi`` if every cone is polyhedral, else None."""
    lo = np.full(ws.p.n_rows, -np.inf)
    hi = np.full(ws.p.n_rows, np.inf)
    for k, sl in ws.slices:
        if isinstance(k, Zero):
            lo[sl] = hi[sl] = 0.0
        elif isinstance(k, NonNeg):
            lo[sl] = 0.0
        elif isinstance(k, Box):
            lo[sl], hi[sl] = ws.box_lo[sl.start], ws.box_hi[sl.start]
        else:
            return None
    return lo, hi


def _polish(ws: _Workspace, bounds, x, s, y):
    """Guess the active rows from ``(s, y)`` and solve the reduced KKT system.

    Internal multipliers satisfy ``A^T y = c``; a row sits at its lower bound
    when ``y < 0`` and at its upper bound when ``y > 0``. The reduced system
    is solved by iterative refinement on a regularized factorization.
    """
    lo, hi = bounds
    low = (s - lo < -y) | (lo == hi)
    up = (hi - s < y) & ~low
    act = np.flatnonzero(low | up)
    if act.size == 0:
        return None
    target = np.where(low, lo, hi)[act]
    Aa = ws.A[act]
    n, k = ws.p.n_vars, act.size
    delta = 1e-9
    Kreg = sp.bmat([[delta * sp.identity(n), Aa.T], [Aa, -delta * sp.identity(k)]], format="csc")
    Kex = sp.bmat([[sp.csc_matrix((n, n)), Aa.T], [Aa, sp.csc_matrix((k, k))]], format="csc")
    try:
        lu = spla.splu(Kreg, permc_spec="COLAMD")
    except RuntimeError:
        return None
    rhs = np.concatenate([ws.c, ws.b[act] - target])
    z = np.concatenate([x, y[act]])
    for _ in range(ws.st.polish_refine):
        z = z + lu.solve(rhs - Kex @ z)
    if not np.all(np.isfinite(z)):
        return None
    xp = z[:n]
    yp = np.zeros_like(y)
    yp[act] = z[n:]
    yp = np.where(low & (lo < hi), np.minimum(yp, 0.0), yp)
    yp = np.where(up, np.maximum(yp, 0.0), yp)
    sp_ = np.clip(ws.b - ws.A @ xp, lo, hi)
    return xp, sp_, yp


def _unscaled(ws: _Workspace, x, s, y):
    """Map scaled iterates back to the user problem; y flipped to the A^T y + c = 0 convention."""
    xu = ws.D * x
    su = s / ws.E
    yu = -(ws.E * y) / ws.gamma
    return xu, su, yu


def _metrics(p: ConicProblem, xu, su, yu, AT=None):
    Ax = p.A @ xu
    ATy = (p.A.T if AT is None else AT) @ yu
    rp = np.linalg.norm(Ax + su - p.b, np.inf)
    rd = np.linalg.norm(ATy + p.c, np.inf)
    pobj = float(p.c @ xu)
    dobj = -float(p.b @ yu)
    for k, sl in p.cone_slices():
        dobj -= support_neg(k, yu[sl])
    scale_p = max(np.linalg.norm(Ax, np.inf), np.linalg.norm(su, np.inf), np.linalg.norm(p.b, np.inf))
    scale_d = max(np.linalg.norm(ATy, np.inf), np.linalg.norm(p.c, np.inf))
    return rp, rd, pobj, dobj, scale_p, scale_d


def _step(ws: _Workspace, x, v, alpha):
    """One ADMM sweep on the state ``(x, v)``; ``s = P(v)``, ``y = rho (v - P(v))``."""
    n = ws.p.n_vars
    s = ws.project(v)
    y = ws.rho * (v - s)
    rhs = np.concatenate([ws.st.sigma * x - ws.c, ws.b - s + y / ws.rho])
    sol = ws.lu.solve(rhs)
    xt, nu = sol[:n], sol[n:]
    s_tilde = s - (y + nu) / ws.rho
    x_new = alpha * xt + (1 - alpha) * x
    v_new = alpha * s_tilde + (1 - alpha) * s + y / ws.rho
    return x_new, v_new


class _Anderson:
    """Type-II Anderson acceleration with a fixed memory (ring buffer of differences)."""

    def __init__(self, mem: int):
        self.mem = mem
        self.S = self.Y = None
        self.count = 0
        self.head = 0
        self.w_prev = None
        self.g_prev = None

    def reset(self):
        self.count = self.head = 0
        self.w_prev = self.g_prev = None

    def extrapolate(self, w, g):
        if self.w_prev is not None:
            if self.S is None or self.S.shape[0] != len(w):
                self.S = np.empty((len(w), self.mem))
                self.Y = np.empty((len(w), self.mem))
            np.subtract(w, self.w_prev, out=self.S[:, self.head])
            np.subtract(g, self.g_prev, out=self.Y[:, self.head])
            self.head = (self.head + 1) % self.mem
            self.count = min(self.count + 1, self.mem)
        self.w_prev, self.g_prev = w, g
        if not self.count:
            return None
        # column order is irrelevant to the least-squares combination
        S, Y = self.S[:, : self.count], self.Y[:, : self.count]
        YtY = Y.T @ Y
        reg = 1e-10 * max(float(YtY.trace()), 1e-300)
        YtY.flat[:: self.count + 1] += reg
        try:
            gamma = np.linalg.solve(YtY, Y.T @ g)
        except np.linalg.LinAlgError:
            self.reset()
            return None
        return w + g - (S + Y) @ gamma


def solve(p: ConicProblem, settings: SolverSettings | None = None, raise_on_failure=False) -> ConicSolution:
    """Solve a conic program.

    Parameters
    ----------
    p : ConicProblem
    settings : SolverSettings, optional
    raise_on_failure : bool
        Raise :class:`SolverError` (carrying the last iterate) instead of
        returning a non-optimal solution.
    """
    st = settings or SolverSettings()
    if p.n_vars == 0 or p.n_rows == 0:
        raise ValueError("structurally empty conic problem")
    ws = _Workspace(p, st)
    AT = p.A.T.tocsr()
    n = p.n_vars
    alpha = st.relaxation
    x = np.zeros(n)
    v = np.zeros(p.n_rows)
    aa = _Anderson(st.anderson_mem) if st.anderson_mem > 0 else None
    y_prev = np.zeros(p.n_rows)
    x_prev = x.copy()
    status = Status.MAX_ITER
    it = 0
    metrics = None
    bounds = _row_bounds(ws) if st.polish else None
    polished = None
    x_f, v_f = _step(ws, x, v, alpha)
    for it in range(1, st.max_iter + 1):
        # (x_f, v_f) = T(x, v) is always current here
        g = np.concatenate([x_f - x, v_f - v])
        g_norm = np.sqrt(g @ g)
        x, v = x_f, v_f
        if aa is not None:
            w_aa = aa.extrapolate(np.concatenate([x - g[:n], v - g[n:]]), g)
            if w_aa is not None:
                xa, va = w_aa[:n], w_aa[n:]
                xa_f, va_f = _step(ws, xa, va, alpha)
                ga_norm = np.sqrt((xa_f - xa) @ (xa_f - xa) + (va_f - va) @ (va_f - va))
                if ga_norm <= st.anderson_safeguard * g_norm:
                    x, v = xa, va
                    x_f, v_f = xa_f, va_f
                else:
                    aa.reset()
                    x_f, v_f = _step(ws, x, v, alpha)
            else:
                x_f, v_f = _step(ws, x, v, alpha)
        else:
            x_f, v_f = _step(ws, x, v, alpha)

        if it % st.check_every == 0 or it == st.max_iter:
            s = ws.project(v)
            y = ws.rho * (v - s)
            xu, su, yu = _unscaled(ws, x, s, y)
            rp, rd, pobj, dobj, scp, scd = _metrics(p, xu, su, yu, AT)
            gap = abs(pobj - dobj)
            metrics = (rp, rd, pobj, dobj, gap)
            if it % (40 * st.check_every) == 0:
                log.debug("it=%d rp=%.2e rd=%.2e gap=%.2e rho=%.2e", it, rp, rd, gap, ws.rho_base)
            if (
                rp <= st.eps_abs + st.eps_rel * scp
                and rd <= st.eps_abs + st.eps_rel * scd
                and gap <= st.eps_abs + st.eps_rel * max(abs(pobj), abs(dobj))
            ):
                status = Status.OPTIMAL
                break
            if bounds is not None and (it % st.polish_every == 0 or it == st.max_iter):
                polished = _try_polish(ws, p, bounds, x, s, y, AT)
                if polished is not None:
                    status = Status.OPTIMAL
                    break
            if _infeasible(ws, y - y_prev, x - x_prev, st):
                status = Status.INFEASIBLE
                break
            y_prev = y
            x_prev = x.copy()

        if it % st.adapt_every == 0:
            s = ws.project(v)
            y = ws.rho * (v - s)
            if _adapt_rho(ws, x, s, y):
                v = s + y / ws.rho
                if aa is not None:
                    aa.reset()
                x_f, v_f = _step(ws, x, v, alpha)

    if polished is not None:
        xu, su, yu, metrics = polished
    else:
        s = ws.project(v)
        y = ws.rho * (v - s)
        xu, su, yu = _unscaled(ws, x, s, y)
    if metrics is None or status is Status.MAX_ITER:
        rp, rd, pobj, dobj, _, _ = _metrics(p, xu, su, yu, AT)
        metrics = (rp, rd, pobj, dobj, abs(pobj - dobj))
    rp, rd, pobj, dobj, gap = metrics
    out = ConicSolution(
        x=xu, y=yu, s=su, status=status, primal_residual=rp, dual_residual=rd, gap=gap,
        objective=pobj, dual_objective=dobj, iterations=it, eps_abs=st.eps_abs, eps_rel=st.eps_rel,
    )
    if status is not Status.OPTIMAL:
        log.warning("conic solve ended with %s after %d iterations (rp=%.2e rd=%.2e gap=%.2e)",
                    status.value, it, rp, rd, gap)
        if raise_on_failure:
            raise SolverError(f"conic solver: {status.value}", out)
    return out


def _converged(st: SolverSettings, rp, rd, pobj, dobj, scp, scd) -> bool:
    return (rp <= st.eps_abs + st.eps_rel * scp and rd <= st.eps_abs + st.eps_rel * scd
            and abs(pobj - dobj) <= st.eps_abs + st.eps_rel * max(abs(pobj), abs(dobj)))


def _try_polish(ws, p, bounds, x, s, y, AT):
    out = _polish(ws, bounds, x, s, y)
    if out is None:
        return None
    xu, su, yu = _unscaled(ws, *out)
    rp, rd, pobj, dobj, scp, scd = _metrics(p, xu, su, yu, AT)
    if not _converged(ws.st, rp, rd, pobj, dobj, scp, scd):
        return None
    return xu, su, yu, (rp, rd, pobj, dobj, abs(pobj - dobj))


def _adapt_rho(ws: _Workspace, x, s, y):
    Ax = ws.A @ x
    ATy = ws.AT @ y  # internal multiplier satisfies A^T y = c at optimality
    rp = np.linalg.norm(Ax + s - ws.b, np.inf)
    rd = np.linalg.norm(ATy - ws.c, np.inf)
    np_ = rp / max(np.linalg.norm(Ax, np.inf), np.linalg.norm(s, np.inf), np.linalg.norm(ws.b, np.inf), 1e-30)
    nd = rd / max(np.linalg.norm(ATy, np.inf), np.linalg.norm(ws.c, np.inf), 1e-30)
    if nd <= 0 or np_ <= 0:
        return False
    ratio = np_ / nd
    if ratio > 10 or ratio < 0.1:
        new = float(np.clip(ws.rho_base * np.sqrt(ratio), 1e-6, 1e6))
        if new != ws.rho_base:
            ws.rho_base = new
            ws._factor()
            return True
    return False


def _infeasible(ws: _Workspace, dy, dx, st: SolverSettings) -> bool:
    """Heuristic certificates from iterate differences (scaled space)."""
    tol = 1e-7
    ndy = np.linalg.norm(dy, np.inf)
    if ndy > 1e-3:
        # primal infeasibility: A^T dy ~ 0 and support term negative
        dyu = -dy
        if np.linalg.norm(ws.AT @ dyu, np.inf) <= tol * ndy:
            supp = float(ws.b @ dyu)
            for k, sl in ws.slices:
                if isinstance(k, Box):
                    supp += support_neg(k, dyu[sl], ws.box_lo[sl.start], ws.box_hi[sl.start])
            if supp < -tol * ndy:
                return True
    ndx = np.linalg.norm(dx, np.inf)
    if ndx > 1e-3:
        if float(ws.c @ dx) < -tol * ndx:
            Adx = -(ws.A @ dx)
            proj = ws.project(Adx)
            # recession directions of boxes are zero
            if np.linalg.norm(Adx - proj, np.inf) <= tol * ndx and not any(isinstance(k, Box) for k, _ in ws.slices):
                return True
    return False
