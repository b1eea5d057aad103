import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from tvexact.measure import DiscreteMeasure, DomainError, pair
from tvexact.operators import (Derivative1D, Identity, PiecewiseConstant, PiecewiseLinear, QuadratureAdjoint,
                               eval_signal, kernel_basis, kernel_pairing, make_operator, pinv_adjoint, pinv_delta,
                               reconstruct, trig_adjoint)
from tvexact.trig import TrigPoly, eval_trig

D = Derivative1D()
I = Identity()  # noqa: E741


def test_kernel_basis_identity():
    assert kernel_basis(I) == []


def test_kernel_basis_derivative():
    (one,) = kernel_basis(D)
    np.testing.assert_array_equal(one(np.array([0.0, 0.3, 1.0])), [1.0, 1.0, 1.0])


def test_kernel_dim_consistent():
    for L in (I, D, Derivative1D(torus=True)):
        assert len(kernel_basis(L)) == L.kernel_dim


def test_make_operator():
    assert isinstance(make_operator("identity"), Identity)
    assert make_operator("derivative", torus=True).torus
    with pytest.raises(ValueError):
        make_operator("laplacian")


# pinv_delta

def test_pinv_delta_derivative_values():
    g = pinv_delta(D, 0.25)
    assert g(0.0) == -0.75
    assert g(1.0) == 0.25
    assert quad(g, 0, 1, points=[0.25])[0] == pytest.approx(0.0, abs=1e-12)


def test_pinv_delta_zero_mean_trapezoid():
    for x in (0.1, 0.5, 0.77):
        s = np.linspace(0, 1, 10_001)
        assert abs(np.trapezoid(pinv_delta(D, x)(s), s)) <= 1e-4  # one jump costs O(h)
        # exact mean: the step has mass (1 - x) above and (1 - x) subtracted
        assert quad(pinv_delta(D, x), 0, 1, points=[x])[0] == pytest.approx(0.0, abs=1e-12)


def test_pinv_delta_boundary():
    g = pinv_delta(D, 0.0)
    np.testing.assert_array_equal(g(np.linspace(0, 1, 5)), np.zeros(5))


def test_pinv_delta_identity_is_atom():
    at = pinv_delta(I, 0.3)
    assert pair(at, lambda x: x * x) == pytest.approx(0.09, abs=1e-15)


def test_pinv_delta_domain_error():
    with pytest.raises(DomainError):
        pinv_delta(D, 1.5)


# pinv_adjoint

def test_adjoint_constant_is_zero():
    xi = PiecewiseConstant([0.0, 0.5, 1.0], [3.0, 3.0])
    rho = pinv_adjoint(D, xi)
    np.testing.assert_allclose(rho(np.linspace(0, 1, 11)), 0.0, atol=1e-15)


def test_adjoint_half_indicator():
    xi = PiecewiseConstant([0.0, 0.5, 1.0], [1.0, 0.0])
    rho = pinv_adjoint(D, xi)
    assert isinstance(rho, PiecewiseLinear)
    assert rho(0.5) == pytest.approx(-0.25, abs=1e-15)
    assert rho(0.0) == 0.0 and rho(1.0) == 0.0
    # oracle: quadrature of the defining integral
    for s in (0.1, 0.3, 0.8):
        ref = quad(lambda t: 0.5 - xi(t), 0, s, points=[0.5] if s > 0.5 else None)[0]
        assert rho(s) == pytest.approx(ref, abs=1e-12)
    np.testing.assert_allclose(np.diff(rho.values) / np.diff(rho.breakpoints), [-0.5, 0.5], atol=1e-15)


def test_adjoint_grid_ten():
    rng = np.random.default_rng(0)
    bp = np.linspace(0, 1, 11)
    rho = pinv_adjoint(D, PiecewiseConstant(bp, rng.standard_normal(10)))
    assert isinstance(rho, PiecewiseLinear)
    np.testing.assert_array_equal(rho.breakpoints, bp)
    assert rho.values[0] == 0.0 and rho.values[-1] == 0.0


def test_adjoint_identity_passthrough():
    f = PiecewiseLinear([0.0, 1.0], [1.0, 2.0])
    assert pinv_adjoint(I, f) is f


def test_adjoint_breakpoints_must_cover():
    with pytest.raises(DomainError):
        pinv_adjoint(D, PiecewiseConstant([0.0, 0.5], [1.0]))


def _tail_integral(xi: PiecewiseConstant, x):
    """int_x^1 xi for piecewise-constant xi."""
    lo = np.maximum(xi.breakpoints[:-1], x)
    hi = xi.breakpoints[1:]
    return float(xi.values @ np.clip(hi - lo, 0, None))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_adjoint_consistency(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 15))
    bp = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, n - 1)), [1.0]])
    if np.any(np.diff(bp) <= 1e-9):
        return
    xi = PiecewiseConstant(bp, rng.standard_normal(n))
    k = int(rng.integers(1, 6))
    x, d = rng.uniform(0, 1, k), rng.standard_normal(k)
    rho = pinv_adjoint(D, xi)
    lhs = float(rho(x) @ d)
    # <xi, L+ mu> = sum_k d_k (int_{x_k}^1 xi - (1 - x_k) int xi)
    rhs = sum(dk * (_tail_integral(xi, xk) - (1 - xk) * xi.integral()) for xk, dk in zip(x, d))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_adjoint_piecewise_linear_quadrature():
    a = PiecewiseLinear([0.0, 0.3, 1.0], [1.0, -2.0, 0.5])
    rho = pinv_adjoint(D, a)
    mean = quad(a, 0, 1, points=[0.3])[0]
    for s in (0.0, 0.2, 0.3, 0.65, 1.0):
        ref = quad(lambda t: mean - a(t), 0, s, points=[0.3] if s > 0.3 else None)[0] if s > 0 else 0.0
        assert rho(s) == pytest.approx(ref, abs=1e-12)


def test_adjoint_generic_callable_is_flagged():
    rho = pinv_adjoint(D, np.cos)
    assert isinstance(rho, QuadratureAdjoint) and rho.approximate
    mean = np.sin(1.0)
    assert rho(0.4) == pytest.approx(mean * 0.4 - np.sin(0.4), abs=1e-12)


def test_trig_adjoint_derivative_relation():
    rng = np.random.default_rng(2)
    K = 4
    c = rng.standard_normal(2 * K + 1) + 1j * rng.standard_normal(2 * K + 1)
    c = 0.5 * (c + np.conj(c[::-1]))
    a = TrigPoly(K, c)
    rho = trig_adjoint(a)
    # d/dt rho = mean - a on the torus; central differences
    t, h = np.linspace(0, 1, 17), 1e-6
    deriv = (eval_trig(rho, t + h) - eval_trig(rho, t - h)) / (2 * h)
    np.testing.assert_allclose(deriv, c[K].real - eval_trig(a, t), atol=1e-6)
    assert rho.coeffs[K] == 0


def test_kernel_pairing():
    assert kernel_pairing(PiecewiseConstant([0.0, 1.0], [2.0])) == 2.0
    assert kernel_pairing(PiecewiseLinear([0.0, 1.0], [0.0, 2.0])) == 1.0


# reconstruct / eval_signal

def test_reconstruct_single_jump():
    sig = reconstruct(D, DiscreteMeasure([[0.5]], [2.0]), [0.0])
    assert eval_signal(sig, 0.25) == pytest.approx(-1.0, abs=1e-15)
    assert eval_signal(sig, 0.75) == pytest.approx(1.0, abs=1e-15)


def test_reconstruct_constant():
    sig = reconstruct(D, DiscreteMeasure.empty(), [3.0])
    np.testing.assert_array_equal(eval_signal(sig, np.linspace(0, 1, 7)), 3.0)


def test_reconstruct_identity_keeps_measure():
    mu = DiscreteMeasure([[0.2], [0.6]], [1.0, -2.0])
    sig = reconstruct(I, mu)
    assert sig.measure is mu
    with pytest.raises(TypeError):
        eval_signal(sig, 0.3)


def test_reconstruct_dimension_mismatch():
    with pytest.raises(ValueError):
        reconstruct(D, DiscreteMeasure.empty(), [1.0, 2.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 0.99), st.floats(-3, 3)), min_size=1, max_size=5), st.floats(-2, 2))
def test_signal_jumps_and_flatness(atoms, c):
    xs = np.array([a for a, _ in atoms])
    if len(xs) > 1 and np.min(np.diff(np.sort(xs))) < 1e-3:
        return
    mu = DiscreteMeasure(xs, [w for _, w in atoms])
    sig = reconstruct(D, mu, [c])
    for xk, dk in zip(xs, mu.weights):
        right = eval_signal(sig, xk)
        left = eval_signal(sig, xk - 1e-9)
        assert right - left == pytest.approx(dk, abs=1e-12)
    # flat away from jumps
    s = np.linspace(0, 1, 401)
    s = s[np.min(np.abs(s[:, None] - xs[None, :]), axis=1) > 2e-3]
    fd = (eval_signal(sig, np.clip(s + 1e-3, 0, 1)) - eval_signal(sig, s))
    near = np.min(np.abs((s + 1e-3)[:, None] - xs[None, :]), axis=1) > 1e-3
    ok = near & np.all(~((s[:, None] < xs[None, :]) & (s[:, None] + 1e-3 >= xs[None, :])), axis=1)
    np.testing.assert_allclose(fd[ok], 0.0, atol=1e-12)
