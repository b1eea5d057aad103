"""Regularizing operators ``L``: identity on measures and the 1D derivative.

For ``Derivative1D`` on ]0,1[ the pseudoinverse is the centered primitive
``(L+ mu)(s) = mu([0, s]) - int_0^1 mu([0, t]) dt`` and its adjoint acts on a
measurement function ``xi`` by ``s -> int_0^s (mean(xi) - xi(t)) dt``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measure import DiscreteMeasure, DomainError
from .trig import TrigPoly

GL_NODES = 32


@dataclass(frozen=True)
class Identity:
    dim: int = 1
    domain: tuple = (0.0, 1.0)
    kind = "identity"

    @property
    def kernel_dim(self) -> int:
        return 0


@dataclass(frozen=True)
class Derivative1D:
    """Distributional derivative on ]0,1[ (or on the torus when ``torus``)."""

    torus: bool = False
    kind = "derivative"

    @property
    def dim(self) -> int:
        return 1

    @property
    def domain(self) -> tuple:
        return (0.0, 1.0)

    @property
    def kernel_dim(self) -> int:
        return 1


RegularizerOp = Identity | Derivative1D


def make_operator(name: str, **kw) -> RegularizerOp:
    key = name.lower()
    if key in ("identity", "id"):
        return Identity(**kw)
    if key in ("derivative", "derivative1d", "d"):
        return Derivative1D(**kw)
    raise ValueError(f"unknown operator {name!r}")


# ---------------------------------------------------------------- 1D functions

def _check_breaks(bp):
    bp = np.asarray(bp, dtype=float)
    if bp.ndim != 1 or len(bp) < 2:
        raise ValueError("need at least two breakpoints")
    if np.any(np.diff(bp) <= 0):
        raise ValueError("breakpoints must be strictly increasing")
    return bp


@dataclass(frozen=True, eq=False)
class PiecewiseConstant:
    """``values[k]`` on ``[breakpoints[k], breakpoints[k+1])``, right-continuous."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = _check_breaks(self.breakpoints)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(bp) - 1,):
            raise ValueError(f"{len(bp) - 1} pieces but {v.shape} values")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", v)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self.breakpoints, s, side="right") - 1, 0, len(self.values) - 1)
        return self.values[k]

    def integral(self) -> float:
        return float(self.values @ np.diff(self.breakpoints))


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Continuous linear interpolant of ``values`` at ``breakpoints``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = _check_breaks(self.breakpoints)
        v = np.asarray(self.values, dtype=float)
        if v.shape != bp.shape:
            raise ValueError("one value per breakpoint expected")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", v)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < self.breakpoints[0]) or np.any(s > self.breakpoints[-1]):
            raise DomainError("evaluation point outside the breakpoint range")
        return np.interp(s, self.breakpoints, self.values)

    def integral(self) -> float:
        v, h = self.values, np.diff(self.breakpoints)
        return float(0.5 * (v[:-1] + v[1:]) @ h)


@dataclass(frozen=True, eq=False)
class QuadratureAdjoint:
    """``s -> int_0^s (mean - a)`` for a generic callable ``a``.

    Approximate: composite Gauss-Legendre with ``GL_NODES`` nodes per piece.
    """

    a: Callable
    breakpoints: np.ndarray
    approximate = True

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", _check_breaks(self.breakpoints))
        object.__setattr__(self, "_mean", _gl_integral(self.a, self.breakpoints))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape)
        for idx, v in np.ndenumerate(s):
            bp = self.breakpoints[self.breakpoints < v]
            pts = np.append(bp, v) if len(bp) else np.array([0.0, v])
            out[idx] = self._mean * v - (_gl_integral(self.a, pts) if v > 0 else 0.0)
        return out if out.ndim else float(out)


def _gl_integral(a, pts) -> float:
    x, w = np.polynomial.legendre.leggauss(GL_NODES)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi <= lo:
            continue
        t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        total += 0.5 * (hi - lo) * float(w @ np.asarray([a(ti) for ti in t], dtype=float))
    return total


# ---------------------------------------------------------------- operations

def _one(s):
    return np.ones_like(np.asarray(s, dtype=float))


def kernel_basis(L: RegularizerOp) -> list[Callable]:
    return [] if isinstance(L, Identity) else [_one]


def _check_point(L, x):
    lo, hi = L.domain
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xa < lo) or np.any(xa > hi):
        raise DomainError(f"point {x} outside the domain [{lo}, {hi}]")


def pinv_delta(L: RegularizerOp, x):
    """``L+ delta_x``: an atom for ``Identity``, a centered step for ``Derivative1D``."""
    _check_point(L, x)
    if isinstance(L, Identity):
        return DiscreteMeasure(np.atleast_2d(np.asarray(x, dtype=float)), [1.0])
    x = float(x)

    def step(s):
        s = np.asarray(s, dtype=float)
        return (s >= x).astype(float) - (1.0 - x)

    return step


def pinv_adjoint(L: RegularizerOp, a, breakpoints=None):
    """``(L+)^* a``.

    Exact for :class:`PiecewiseConstant` (returns a :class:`PiecewiseLinear`),
    :class:`PiecewiseLinear` (returns a piecewise-quadratic callable) and
    :class:`TrigPoly` (torus form). Any other callable goes through
    :class:`QuadratureAdjoint` on ``breakpoints``, 64 uniform pieces by default.
    """
    if isinstance(L, Identity):
        return a
    if isinstance(a, TrigPoly):
        return trig_adjoint(a)
    if isinstance(a, (PiecewiseConstant, PiecewiseLinear)) and (a.breakpoints[0] != 0.0 or a.breakpoints[-1] != 1.0):
        raise DomainError("measurement breakpoints must cover [0, 1]")
    if isinstance(a, PiecewiseConstant):
        bp = a.breakpoints
        xi_bar = a.integral()
        cum = np.concatenate([[0.0], np.cumsum((xi_bar - a.values) * np.diff(bp))])
        cum[-1] = 0.0  # exact: int_0^1 (mean - xi) = 0
        cum[0] = 0.0
        return PiecewiseLinear(bp, cum)
    if isinstance(a, PiecewiseLinear):
        return _pwl_adjoint(a)
    if breakpoints is None:
        breakpoints = np.linspace(0.0, 1.0, 65)
    return QuadratureAdjoint(a, breakpoints)


def _pwl_adjoint(a: PiecewiseLinear):
    bp, v = a.breakpoints, a.values
    h = np.diff(bp)
    mean = a.integral()
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[:-1] + v[1:]) * h)])

    def rho(s):
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(bp, s, side="right") - 1, 0, len(h) - 1)
        t = s - bp[k]
        slope = (v[k + 1] - v[k]) / h[k]
        prim = cum[k] + v[k] * t + 0.5 * slope * t * t
        return mean * s - prim

    return rho


def trig_adjoint(a: TrigPoly) -> TrigPoly:
    """Torus version: Fourier coefficients ``a_j / (2 pi i j)``, zero mean."""
    j = np.arange(-a.K, a.K + 1)
    c = np.zeros(2 * a.K + 1, dtype=complex)
    nz = j != 0
    c[nz] = a.coeffs[nz] / (2j * np.pi * j[nz])
    return TrigPoly(a.K, c)


def kernel_pairing(a) -> float:
    """``<a, 1>`` on [0,1]."""
    if isinstance(a, (PiecewiseConstant, PiecewiseLinear)):
        return a.integral()
    if isinstance(a, TrigPoly):
        return float(a.coeffs[a.K].real)
    return _gl_integral(a, np.linspace(0.0, 1.0, 65))


@dataclass(frozen=True, eq=False)
class EvaluableSignal:
    """``u = sum_i c_i lambda_i + sum_k d_k L+ delta_{x_k}``."""

    op: RegularizerOp
    kernel_coeffs: np.ndarray
    measure: DiscreteMeasure


def reconstruct(L: RegularizerOp, mu: DiscreteMeasure, c=None) -> EvaluableSignal:
    c = np.zeros(L.kernel_dim) if c is None else np.atleast_1d(np.asarray(c, dtype=float))
    if len(c) != L.kernel_dim:
        raise ValueError(f"expected {L.kernel_dim} kernel coefficients, got {len(c)}")
    if len(mu):
        _check_point(L, mu.positions)
    return EvaluableSignal(L, c, mu)


def eval_signal(sig: EvaluableSignal, s):
    """Pointwise value; right-continuous at jumps. Undefined for ``Identity``."""
    if isinstance(sig.op, Identity):
        raise TypeError("an Identity signal is a measure and has no pointwise values")
    s = np.asarray(s, dtype=float)
    _check_point(sig.op, s)
    x = sig.measure.positions[:, 0]
    d = sig.measure.weights
    val = sig.kernel_coeffs[0] + np.zeros(s.shape)
    for xk, dk in zip(x, d):
        val = val + dk * ((s >= xk).astype(float) - (1.0 - xk))
    return val if val.ndim else float(val)
