"""The finite primal over fixed atom positions and its LP-type dual.

Primal::

    min_{c, d}  f(Mk c + Ma d) + ||d||_1      (optionally sum(d) = 0)

Dual::

    max_q  -f*(q)   s.t.  |Ma^T q| <= 1,  Mk^T q = 0
                    (|Ma^T q + kappa| <= 1 with free kappa when sum(d) = 0)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic.admm import ConicSolution, SolverSettings, solve
from .conic.cones import Box, NonNeg, Zero
from .conic.problem import ConicProblem, ProblemBuilder, selector
from .fidelity import EqualityTo

log = logging.getLogger(__name__)


@dataclass
class PrimalResult:
    c: np.ndarray
    d: np.ndarray
    objective: float
    solution: ConicSolution | None

    @property
    def residuals(self) -> dict:
        s = self.solution
        if s is None:
            return {"primal": 0.0, "dual": 0.0, "gap": 0.0}
        return {"primal": s.primal_residual, "dual": s.dual_residual, "gap": s.gap}


def _as2d(M, m):
    if M is None:
        return np.zeros((m, 0))
    M = np.asarray(M, dtype=float)
    return M.reshape(m, -1)


def primal_problem(Mk, Ma, f, zero_sum: bool = False) -> tuple[ConicProblem, slice, slice, slice]:
    m = f.m
    Mk, Ma = _as2d(Mk, m), _as2d(Ma, m)
    r, p = Mk.shape[1], Ma.shape[1]
    bld = ProblemBuilder()
    c = bld.add_variables(r)
    dp = bld.add_variables(p, 1.0)
    dn = bld.add_variables(p, 1.0)
    if p:
        bld.add_block(NonNeg(2 * p), -sp.hstack([sp.csr_matrix((2 * p, r)), sp.identity(2 * p)]), np.zeros(2 * p))
    if zero_sum and p:
        row = np.concatenate([np.zeros(r), np.ones(p), -np.ones(p)])
        bld.add_block(Zero(1), row[None, :], [0.0])
    G = sp.csr_matrix(np.hstack([Mk, Ma, -Ma]))
    f.conic_encoding().attach(bld, G)
    return bld.build(), c, dp, dn


def solve_primal(Mk, Ma, f, settings: SolverSettings | None = None, zero_sum: bool = False,
                 raise_on_failure: bool = False) -> PrimalResult:
    """Solve the finite primal; columns of ``Ma`` are the atom candidates."""
    m = f.m
    Mk, Ma = _as2d(Mk, m), _as2d(Ma, m)
    p = Ma.shape[1]
    if p == 0 and Mk.shape[1] == 0:
        val = f.eval(np.zeros(m))
        return PrimalResult(np.zeros(0), np.zeros(0), float(val), None)
    prob, c, dp, dn = primal_problem(Mk, Ma, f, zero_sum)
    sol = solve(prob, settings, raise_on_failure=raise_on_failure)
    d = sol.x[dp] - sol.x[dn]
    cc = sol.x[c]
    obj = float(f.eval(Mk @ cc + Ma @ d)) if not isinstance(f, EqualityTo) else 0.0
    obj += float(np.sum(np.abs(d)))
    if not np.isfinite(obj):
        obj = sol.objective
    return PrimalResult(cc, d, obj, sol)


def refit_exact(Mk, Ma, b, zero_sum: bool = False, rtol: float = 1e-10):
    """Least-squares fit of ``Mk c + Ma d = b`` when the columns are independent.

    Returns ``(c, d)`` or ``None`` when the system is rank deficient (then the
    l1 objective selects among many fits and a conic solve is needed).
    """
    m = len(b)
    Mk, Ma = _as2d(Mk, m), _as2d(Ma, m)
    M = np.hstack([Mk, Ma])
    r = Mk.shape[1]
    if zero_sum and Ma.shape[1]:
        M = np.vstack([M, np.concatenate([np.zeros(r), np.ones(Ma.shape[1])])])
        b = np.concatenate([b, [0.0]])
    if M.shape[1] == 0:
        return np.zeros(0), np.zeros(0)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] <= rtol * sv[0] or M.shape[1] > M.shape[0]:
        return None
    x, *_ = np.linalg.lstsq(M, b, rcond=None)
    return x[:r], x[r:]


def dual_problem(Mk, Ma, f, zero_sum: bool = False) -> tuple[ConicProblem, slice]:
    m = f.m
    Mk, Ma = _as2d(Mk, m), _as2d(Ma, m)
    p = Ma.shape[1]
    bld = ProblemBuilder()
    q = bld.add_variables(m)
    if zero_sum:
        bld.add_variables(1)  # kappa
    f.conjugate_encoding().attach(bld, selector(m, slice(0, m)))
    if p:
        cols = [Ma.T, np.ones((p, 1))] if zero_sum else [Ma.T]
        bld.add_block(Box(p, -1.0, 1.0), -np.hstack(cols), np.zeros(p))
    if Mk.shape[1]:
        bld.add_block(Zero(Mk.shape[1]), Mk.T, np.zeros(Mk.shape[1]))
    return bld.build(), q


def solve_dual(Mk, Ma, f, settings: SolverSettings | None = None, zero_sum: bool = False):
    """Return ``(q, dual_value, solution)`` with ``dual_value = -f*(q)`` maximized."""
    prob, q = dual_problem(Mk, Ma, f, zero_sum)
    sol = solve(prob, settings)
    return sol.x[q], -sol.objective, sol
