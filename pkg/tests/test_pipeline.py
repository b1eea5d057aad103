import numpy as np
import pytest
from scipy.optimize import linprog

from tvexact import experiments as ex
from tvexact.experiments import ExperimentConfig, deriv_1d, fourier_gamma, pwl_1d_identity, run_experiment
from tvexact.fidelity import EqualityTo, Quadratic
from tvexact.measure import DiscreteMeasure
from tvexact.operators import Derivative1D, Identity, PiecewiseConstant, eval_signal, reconstruct
from tvexact.pipeline import (PwLinearFamily, ProblemSpec, TrigFamily, grid_refinement_study, solve_analysis_problem,
                              solve_full, verify_certificate)
from tvexact.pwlinear import random_pwl_measurements, uniform_mesh_1d
from tvexact.trig import ContinuumCertificateError, GammaMatrix, measure_with_trig


def trig_spec(G, mu, f_cls=EqualityTo, **kw):
    b = measure_with_trig(mu, G)
    return ProblemSpec(Identity(), TrigFamily(G), f_cls(b) if f_cls is EqualityTo else f_cls(b=b, **kw))


@pytest.fixture(scope="module")
def single_spike():
    spec = trig_spec(fourier_gamma(10), DiscreteMeasure([0.3141], [1.7]))
    return spec, solve_full(spec)


def test_pwl_zero_data():
    mesh = uniform_mesh_1d(10)
    rho = random_pwl_measurements(mesh, 4, 0)
    sig, rep = solve_analysis_problem(ProblemSpec(Identity(), PwLinearFamily(mesh, tuple(rho)), EqualityTo(np.zeros(4))))
    assert len(sig.measure) == 0
    assert rep.primal_objective == pytest.approx(0.0, abs=1e-8)


def test_single_spike(single_spike):
    _, out = single_spike
    mu = out.signal.measure
    assert len(mu) == 1
    assert abs(mu.positions[0, 0] - 0.3141) <= 1e-6
    assert abs(mu.weights[0] - 1.7) <= 1e-6
    # fine-grid primal oracle: any grid measure is feasible for the continuous
    # problem, so the grid optimum upper-bounds the continuous one
    G = fourier_gamma(10)
    grid = np.arange(4000) / 4000
    R = G.eval_matrix(grid).T
    b = measure_with_trig(DiscreteMeasure([0.3141], [1.7]), G)
    lp = linprog(np.ones(2 * len(grid)), A_eq=np.hstack([R, -R]), b_eq=b, bounds=(0, None), method="highs")
    assert out.report.primal_objective <= lp.fun + 1e-6
    assert out.report.primal_objective == pytest.approx(1.7, abs=1e-6)


def test_m_bar():
    inst = deriv_1d(0, noise=False)
    assert inst.spec.m == 42 and inst.spec.m_bar() == 41
    inst = pwl_1d_identity(0)
    assert inst.spec.m_bar() == inst.spec.m


def test_m_bar_zero_mean_measurements():
    mesh = uniform_mesh_1d(4)
    a = tuple(PiecewiseConstant(mesh.vertices[:, 0], v) for v in ([1.0, -1.0, 1.0, -1.0], [2.0, 0.0, 0.0, -2.0]))
    spec = ProblemSpec(Derivative1D(), PwLinearFamily(mesh, a), EqualityTo(np.zeros(2)))
    assert spec.m_bar() == 2


def test_spec_mismatch():
    mesh = uniform_mesh_1d(4)
    with pytest.raises(ValueError):
        ProblemSpec(Identity(), PwLinearFamily(mesh, tuple(random_pwl_measurements(mesh, 3, 0))), EqualityTo(np.zeros(2)))


def test_continuum_certificate_surfaces():
    # only the mean is measured: every point of the torus is optimal
    spec = ProblemSpec(Identity(), TrigFamily(GammaMatrix(0, np.array([[1.0]]))), EqualityTo(np.ones(1)))
    with pytest.raises(ContinuumCertificateError):
        solve_full(spec)


# verify_certificate

def test_verify_passes(single_spike):
    spec, out = single_spike
    rec = verify_certificate(out.signal, out.report.q, spec, tol=1e-6, gap=out.report.gap)
    assert rec.passed, rec.to_dict()


def test_verify_perturbed_fails(single_spike):
    spec, out = single_spike
    mu = out.signal.measure
    moved = DiscreteMeasure(mu.positions + 0.01, mu.weights)
    sig = type(out.signal)(out.signal.op, out.signal.kernel_coeffs, moved)
    rec = verify_certificate(sig, out.report.q, spec, tol=1e-6, gap=out.report.gap)
    assert not rec.support_in_unit_set.passed
    assert rec.support_in_unit_set.value == pytest.approx(0.01, abs=1e-6)
    assert not rec.passed


def test_verify_zero_measure_vacuous(single_spike):
    spec, out = single_spike
    sig = type(out.signal)(out.signal.op, out.signal.kernel_coeffs, DiscreteMeasure.empty())
    q = 0.5 * np.asarray(out.report.q)
    rec = verify_certificate(sig, q, spec)
    assert rec.passed
    assert rec.certificate_bounded.value < 1.0


# reports

@pytest.mark.parametrize("make", [lambda: pwl_1d_identity(3), lambda: deriv_1d(3, noise=True)])
def test_report_invariants(make):
    out = solve_full(make().spec)
    r = out.report
    assert r.atoms_after_sparsify <= r.atoms_before
    assert r.gap == pytest.approx(r.primal_objective - r.dual_objective, abs=1e-12)
    assert r.gap >= -1e-6 * (1 + abs(r.primal_objective))
    assert r.status == "optimal"
    d = r.to_dict()
    assert {"primal_objective", "dual_objective", "gap", "m", "m_bar", "atoms_before", "atoms_after_sparsify",
            "certificate_max", "residuals", "wall_time"} <= set(d)


def test_derivative_noiseless_recovery():
    inst = deriv_1d(5, noise=False)
    out = solve_full(inst.spec)
    dp, dw = ex.measure_distance(out.signal.measure, inst.truth)
    assert dp <= 1e-5 and dw <= 1e-5
    # the recovered signal matches the true one on a fine grid
    s = np.linspace(0, 1, 2001)
    true_sig = reconstruct(inst.spec.operator, inst.truth, inst.truth_c)
    np.testing.assert_allclose(eval_signal(out.signal, s), eval_signal(true_sig, s), atol=1e-5)


# refinement

def test_refinement_empty():
    rows, _ = grid_refinement_study(fourier_gamma(2), EqualityTo(np.zeros(5)), [])
    assert rows == []


def test_refinement_representable_truth():
    G = fourier_gamma(10)
    mu = DiscreteMeasure([0.2, 0.6], [1.0, -0.8])
    rows, ref = grid_refinement_study(G, EqualityTo(measure_with_trig(mu, G)), [0.1, 0.05])
    assert ref == pytest.approx(1.8, abs=1e-6)
    for r in rows:
        assert abs(r.gap) <= 1e-6


def test_refinement_bad_h():
    with pytest.raises(ValueError):
        grid_refinement_study(fourier_gamma(2), EqualityTo(np.zeros(5)), [0.3], reference=0.0)


# experiments

def _csvs(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


@pytest.mark.parametrize("name", ["pwl-1d-identity", "deriv-1d"])
def test_experiment_deterministic(tmp_path, name):
    for sub in ("a", "b"):
        run_experiment(ExperimentConfig(name, seed=7, out_dir=tmp_path / sub))
    a, b = _csvs(tmp_path / "a"), _csvs(tmp_path / "b")
    assert set(a) == {"atoms_true.csv", "atoms_raw.csv", "atoms_sparse.csv"}
    assert a == b
    assert (tmp_path / "a" / "plot.svg").read_text().startswith("<svg")


def test_experiment_unknown():
    with pytest.raises(ValueError):
        run_experiment(ExperimentConfig("nope"))


def test_sweep_survives_failed_k(tmp_path, monkeypatch):
    real = ex.solve_full

    def flaky(spec):
        if spec.family.gamma.K == 4:
            raise RuntimeError("boom")
        return real(spec)

    monkeypatch.setattr(ex, "solve_full", flaky)
    cfg = ExperimentConfig("trig-sweep", seed=1, overrides={"K": [3, 4, 5], "m": 8, "N": 5}, out_dir=tmp_path)
    out = run_experiment(cfg)
    status = [r["status"] for r in out["sweep"]]
    assert status[1] == "failed" and status[0] != "failed" and status[2] != "failed"
    assert (tmp_path / "atoms_K03.csv").exists() and not (tmp_path / "atoms_K04.csv").exists()
    assert out["sweep"][-1]["relative_input_error"] == pytest.approx(0.0, abs=1e-12)


def test_quadratic_trig_route_report():
    G = ex.random_gamma(ex.make_rng(0), 10, 5)
    spec = trig_spec(G, DiscreteMeasure([0.137, 0.512, 0.803], [1.0, -0.7, 0.5]), Quadratic, lam=100.0)
    out = solve_full(spec)
    assert out.report.route == "dual_sdp"
    assert abs(out.report.gap) <= 1e-6 * (1 + abs(out.report.dual_objective))
    assert out.report.certificate_max <= 1 + 1e-6
