import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from tvexact.experiments import pwl_1d_identity
from tvexact.fidelity import L1, EqualityTo, Quadratic
from tvexact.measure import DiscreteMeasure, DomainError, pair, tv_norm
from tvexact.operators import Derivative1D, PiecewiseConstant, kernel_pairing, pinv_adjoint
from tvexact.pwlinear import (PwLinearFn, SimplicialMesh, assemble_M, eval_pwl, linearize, measure_pwl,
                              random_pwl_measurements, read_functions_csv, read_mesh, solve_vertex_dual,
                              solve_vertex_primal, sparsify_solution, uniform_mesh_1d, uniform_mesh_2d,
                              write_functions_csv, write_mesh)

TRI = SimplicialMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def hat(mesh, k):
    v = np.zeros(mesh.n_vertices)
    v[k] = 1.0
    return PwLinearFn(mesh, v)


# eval_pwl

def test_eval_hat_midpoint():
    mesh = uniform_mesh_1d(2)
    assert eval_pwl(hat(mesh, 1), 0.25) == pytest.approx(0.5, abs=1e-15)


def test_eval_at_vertex_exact():
    mesh = uniform_mesh_1d(5)
    f = PwLinearFn(mesh, np.random.default_rng(0).standard_normal(6))
    for k, x in enumerate(mesh.vertices[:, 0]):
        assert eval_pwl(f, x) == f.vertex_values[k]


def test_eval_triangle_barycentric():
    f = PwLinearFn(TRI, [0.0, 1.0, 2.0])
    assert eval_pwl(f, np.array([1 / 3, 1 / 3])) == pytest.approx(1.0, abs=1e-15)


def test_eval_outside():
    with pytest.raises(DomainError):
        eval_pwl(hat(uniform_mesh_1d(2), 1), 1.5)
    with pytest.raises(DomainError):
        eval_pwl(PwLinearFn(TRI, [0.0, 1.0, 2.0]), np.array([0.8, 0.8]))


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_eval_affine_reproduced_2d(x, y, seed):
    # an affine function sampled at vertices is reproduced everywhere
    rng = np.random.default_rng(seed)
    a, b, c = rng.standard_normal(3)
    mesh = uniform_mesh_2d(4)
    f = PwLinearFn(mesh, mesh.vertices @ np.array([a, b]) + c)
    assert eval_pwl(f, np.array([x, y])) == pytest.approx(a * x + b * y + c, abs=1e-12)


def test_mesh_2d_covers_square():
    mesh = uniform_mesh_2d(10)
    V = mesh.vertices[mesh.cells]
    e1, e2 = V[:, 1] - V[:, 0], V[:, 2] - V[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    assert area.sum() == pytest.approx(1.0, abs=1e-14)
    assert mesh.n_vertices == 121 and len(mesh.cells) == 200


def test_locate_accelerated_matches_scan():
    mesh = uniform_mesh_2d(6)
    rng = np.random.default_rng(3)
    f = PwLinearFn(mesh, rng.standard_normal(mesh.n_vertices))
    for p in rng.uniform(0, 1, (50, 2)):
        _, lam_a = mesh.locate(p, accelerate=True)
        _, lam_s = mesh.locate(p, accelerate=False)
        assert np.all(lam_a >= -1e-12) and np.all(lam_s >= -1e-12)
        ca, cs = mesh.locate(p, True)[0], mesh.locate(p, False)[0]
        va = lam_a @ f.vertex_values[mesh.cells[ca]]
        vs = lam_s @ f.vertex_values[mesh.cells[cs]]
        assert va == pytest.approx(vs, abs=1e-12)


# assemble_M

def test_assemble_single_vertex():
    mesh = uniform_mesh_1d(4)
    f = PwLinearFn(mesh, [0.0, 0.7, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(assemble_M(None, [f], np.array([0.25])), [[0.7]])


def test_assemble_kernel_column():
    a = PiecewiseConstant([0.0, 1.0], [2.0])
    mesh = uniform_mesh_1d(2)
    M = assemble_M(np.array([[kernel_pairing(a)]]), [hat(mesh, 1)], np.array([0.5]))
    assert M[0, 0] == 2.0 and M[0, 1] == 1.0


def test_assemble_entrywise():
    mesh = uniform_mesh_1d(5)
    rho = random_pwl_measurements(mesh, 3, 0)
    nodes = np.array([0.13, 0.77])
    M = assemble_M(None, rho, nodes)
    assert M.shape == (3, 2)
    ref = [[eval_pwl(r, x) for x in nodes] for r in rho]
    np.testing.assert_allclose(M, ref, atol=1e-15)


# vertex primal and dual

def test_vertex_primal_hat():
    mesh = uniform_mesh_1d(4)
    vs = solve_vertex_primal(mesh, [hat(mesh, 2)], EqualityTo(np.ones(1)))
    assert len(vs.measure) == 1
    assert vs.measure.positions[0, 0] == 0.5
    assert vs.measure.weights[0] == pytest.approx(1.0, abs=1e-7)
    assert vs.objective == pytest.approx(1.0, abs=1e-7)
    # oracle: LP over the vertex weights
    R = hat(mesh, 2).vertex_values[None, :]
    n = mesh.n_vertices
    lp = linprog(np.ones(2 * n), A_eq=np.hstack([R, -R]), b_eq=[1.0], bounds=(0, None), method="highs")
    assert vs.objective == pytest.approx(lp.fun, abs=1e-7)


def test_vertex_primal_zero_data():
    mesh = uniform_mesh_1d(6)
    rho = random_pwl_measurements(mesh, 3, 1)
    vs = solve_vertex_primal(mesh, rho, EqualityTo(np.zeros(3)))
    assert len(vs.measure) == 0
    assert vs.objective == pytest.approx(0.0, abs=1e-8)


def _lp_primal_dual(R, b):
    m, n = R.shape
    p = linprog(np.ones(2 * n), A_eq=np.hstack([R, -R]), b_eq=b, bounds=(0, None), method="highs")
    # max -<q, b> s.t. |R^T q| <= 1
    d = linprog(b, A_ub=np.vstack([R.T, -R.T]), b_ub=np.ones(2 * n), bounds=(None, None), method="highs")
    return p.fun, -d.fun


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_vertex_exactness_equality(seed):
    inst = pwl_1d_identity(seed, n_cells=10, m=6, n_atoms=2)
    mesh, rho, f = inst.spec.family.mesh, list(inst.spec.family.functions), inst.spec.fidelity
    vs = solve_vertex_primal(mesh, rho, f)
    _, dval, _ = solve_vertex_dual(mesh, rho, f)
    assert abs(vs.objective - dval) <= 1e-6 * (1 + abs(dval))
    p_ref, d_ref = _lp_primal_dual(np.vstack([r.vertex_values for r in rho]), f.b)
    assert vs.objective == pytest.approx(p_ref, abs=1e-6)
    assert dval == pytest.approx(d_ref, abs=1e-6)
    # measurement consistency and vertex support
    assert np.max(np.abs(measure_pwl(vs.measure, rho) - f.b)) <= 1e-6 * (1 + np.max(np.abs(f.b)))
    verts = set(mesh.vertices[:, 0])
    assert all(x in verts for x in vs.measure.positions[:, 0])
    assert len(vs.measure) <= len(rho)


@pytest.mark.parametrize("fid", ["quadratic", "l1"])
def test_vertex_exactness_penalized(fid):
    mesh = uniform_mesh_2d(4)
    rng = np.random.Generator(np.random.Philox(4))
    rho = random_pwl_measurements(mesh, 5, rng)
    b = rng.standard_normal(5)
    f = Quadratic(10.0, b) if fid == "quadratic" else L1(2.0, b)
    vs = solve_vertex_primal(mesh, rho, f)
    _, dval, _ = solve_vertex_dual(mesh, rho, f)
    assert abs(vs.objective - dval) <= 1e-6 * (1 + abs(dval))
    # objective is what it claims
    val = f.eval(measure_pwl(vs.raw, rho)) + tv_norm(vs.raw)
    assert vs.objective == pytest.approx(val, abs=1e-6)


def test_vertex_derivative_kernel():
    mesh = uniform_mesh_1d(8)
    rng = np.random.Generator(np.random.Philox(5))
    a = [PiecewiseConstant(mesh.vertices[:, 0], rng.standard_normal(8)) for _ in range(5)]
    rho = [PwLinearFn(mesh, pinv_adjoint(Derivative1D(), ai)(mesh.vertices[:, 0])) for ai in a]
    Mk = np.array([[kernel_pairing(ai)] for ai in a])
    b = rng.standard_normal(5)
    vs = solve_vertex_primal(mesh, rho, EqualityTo(b), Mk)
    assert np.max(np.abs(measure_pwl(vs.measure, rho, Mk, vs.c) - b)) <= 1e-6 * (1 + np.max(np.abs(b)))


def test_experiment_shape_sparse_before_merge():
    # a 4-atom truth with 12 measurements leaves at most m vertex atoms
    inst = pwl_1d_identity(1234)
    mesh, rho = inst.spec.family.mesh, list(inst.spec.family.functions)
    vs = solve_vertex_primal(mesh, rho, inst.spec.fidelity)
    assert len(inst.truth) <= len(vs.measure) <= 12


# sparsify_solution

def test_sparsify_endpoint_pair():
    mesh = uniform_mesh_1d(20)
    a, b = 0.4, 0.9
    mu = DiscreteMeasure([[0.6], [0.65]], [-a, -b])
    out = sparsify_solution(mu, mesh)
    assert len(out) == 1
    assert out.positions[0, 0] == pytest.approx((0.6 * a + 0.65 * b) / (a + b), abs=1e-15)
    assert out.weights[0] == pytest.approx(-(a + b), abs=1e-15)


def test_sparsify_isolated():
    mesh = uniform_mesh_1d(10)
    mu = DiscreteMeasure([[0.0], [0.3], [0.7]], [1.0, -1.0, 2.0])
    out = sparsify_solution(mu, mesh)
    np.testing.assert_array_equal(out.sorted().positions, mu.sorted().positions)


def test_sparsify_triangle_barycenter():
    w = np.array([1.0, 2.0, 3.0])
    mu = DiscreteMeasure(TRI.vertices, w)
    out = sparsify_solution(mu, TRI)
    assert len(out) == 1
    np.testing.assert_allclose(out.positions[0], (w @ TRI.vertices) / w.sum(), atol=1e-15)
    rng = np.random.default_rng(0)
    for _ in range(5):
        f = PwLinearFn(TRI, rng.standard_normal(3))
        assert pair(out, f) == pytest.approx(pair(mu, f), rel=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_sparsify_preserves_measurements(seed):
    inst = pwl_1d_identity(seed)
    mesh, rho = inst.spec.family.mesh, list(inst.spec.family.functions)
    vs = solve_vertex_primal(mesh, rho, inst.spec.fidelity)
    out = sparsify_solution(vs.measure, mesh)
    before, after = measure_pwl(vs.measure, rho), measure_pwl(out, rho)
    assert np.max(np.abs(after - before)) <= 1e-9 * (1 + np.max(np.abs(before)))
    assert tv_norm(out) == pytest.approx(tv_norm(vs.measure), rel=1e-12)


# random measurements

def test_random_deterministic():
    mesh = uniform_mesh_1d(7)
    a = random_pwl_measurements(mesh, 3, 42)
    b = random_pwl_measurements(mesh, 3, 42)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.vertex_values, y.vertex_values)


def test_random_empty():
    assert random_pwl_measurements(uniform_mesh_1d(3), 0, 0) == []


def test_random_statistics():
    mesh = uniform_mesh_1d(999)
    vals = np.concatenate([r.vertex_values for r in random_pwl_measurements(mesh, 100, 7)])
    n = len(vals)
    assert n == 100_000
    assert abs(vals.mean()) <= 3 / np.sqrt(n)
    # var of the sample variance of a normal is 2 / (n - 1)
    assert abs(vals.var(ddof=1) - 1.0) <= 3 * np.sqrt(2 / (n - 1))


def test_linearize_vertex_sampling():
    mesh = uniform_mesh_1d(4)
    f = linearize(np.sin, mesh)
    np.testing.assert_array_equal(f.vertex_values, np.sin(mesh.vertices[:, 0]))


# IO

@pytest.mark.parametrize("mesh", [uniform_mesh_1d(5), uniform_mesh_2d(3)])
def test_mesh_and_function_roundtrip(tmp_path, mesh):
    write_mesh(mesh, tmp_path / "m.txt")
    back = read_mesh(tmp_path / "m.txt")
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.cells, mesh.cells)
    rho = random_pwl_measurements(mesh, 2, 0)
    write_functions_csv(rho, tmp_path / "f.csv")
    for a, b in zip(read_functions_csv(tmp_path / "f.csv", back), rho):
        np.testing.assert_array_equal(a.vertex_values, b.vertex_values)
