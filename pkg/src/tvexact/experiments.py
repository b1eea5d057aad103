"""Seeded instance generators and the four built-in experiments.

All randomness comes from ``numpy.random.Generator(Philox(seed))``, a
counter-based generator whose streams are identical across platforms.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conic.admm import SolverSettings
from .fidelity import L1, BoxQuant, EqualityTo, Quadratic
from .measure import DiscreteMeasure, to_rows, write_csv
from .operators import Derivative1D, Identity, PiecewiseConstant, eval_signal, kernel_pairing, pinv_adjoint
from .pipeline import PwLinearFamily, ProblemSpec, TrigFamily, solve_full
from .pwlinear import (linearize, measure_pwl, random_pwl_measurements, uniform_mesh_1d,
                       uniform_mesh_2d)
from .svg import measure_plot, step_plot
from .trig import GammaMatrix, TrigPoly, measure_with_trig, torus_dist

log = logging.getLogger(__name__)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _separated(rng, n, lo, hi, min_sep, periodic=False, tries=10_000):
    for _ in range(tries):
        x = np.sort(rng.uniform(lo, hi, n))
        gaps = np.diff(x)
        if periodic and n > 1:
            gaps = np.append(gaps, x[0] + (hi - lo) - x[-1])
        if n < 2 or gaps.min() >= min_sep:
            return x
    raise ValueError(f"could not place {n} points with separation {min_sep}")


def _nonzero_uniform(rng, n, lo=-1.0, hi=1.0, floor=0.1):
    w = rng.uniform(lo, hi, n)
    return np.where(np.abs(w) < floor, np.sign(w + 1e-300) * floor, w)


# ---------------------------------------------------------------- instances

@dataclass
class Instance:
    spec: ProblemSpec
    truth: DiscreteMeasure
    truth_c: np.ndarray = field(default_factory=lambda: np.zeros(0))
    extra: dict = field(default_factory=dict)


def pwl_1d_identity(seed: int, n_cells: int = 20, m: int = 12, n_atoms: int = 4, min_sep_cells: float = 2.0,
                    settings: SolverSettings | None = None) -> Instance:
    rng = make_rng(seed)
    mesh = uniform_mesh_1d(n_cells)
    rho = random_pwl_measurements(mesh, m, rng)
    x = _separated(rng, n_atoms, 0.0, 1.0, min_sep_cells / n_cells)
    w = _nonzero_uniform(rng, n_atoms)
    mu = DiscreteMeasure(x, w)
    b = measure_pwl(mu, rho)
    spec = ProblemSpec(Identity(), PwLinearFamily(mesh, tuple(rho)), EqualityTo(b), settings or SolverSettings())
    return Instance(spec, mu)


def deriv_1d(seed: int, n_intervals: int = 10, m: int = 42, n_jumps: int = 3, noise: bool = True,
             p_impulse: float = 0.1, variance: float = 3.0, alpha: float = 1.0,
             settings: SolverSettings | None = None) -> Instance:
    """Piecewise-constant signal with off-grid jumps, piecewise-constant measurements.

    Jumps sit in distinct, non-adjacent interior cells at least 5% of a cell
    away from the grid points; plateau values lie in [-1, 1]. A jump in the
    first or last cell is indistinguishable from a smaller jump at the inner
    vertex (a jump at 0 or 1 is a constant), so those cells are excluded.
    """
    rng = make_rng(seed)
    bp = np.linspace(0.0, 1.0, n_intervals + 1)
    a = [PiecewiseConstant(bp, rng.standard_normal(n_intervals)) for _ in range(m)]
    h = 1.0 / n_intervals
    while True:
        cells = np.sort(rng.choice(np.arange(1, n_intervals - 1), n_jumps, replace=False))
        if n_jumps < 2 or np.diff(cells).min() >= 2:
            break
    x = bp[cells] + h * rng.uniform(0.05, 0.95, n_jumps)
    while True:
        levels = rng.uniform(-1.0, 1.0, n_jumps + 1)
        d = np.diff(levels)
        if np.abs(d).min() >= 0.1:
            break
    c = levels[0] + float(np.sum(d * (1.0 - x)))
    truth = DiscreteMeasure(x, d)
    L = Derivative1D()
    rho = [pinv_adjoint(L, ai) for ai in a]
    b = np.array([c * kernel_pairing(ai) + float(r(x) @ d) for ai, r in zip(a, rho)])
    eps = np.zeros(m)
    if noise:
        hit = rng.uniform(size=m) < p_impulse
        eps = np.where(hit, rng.normal(0.0, np.sqrt(variance), m), 0.0)
    f = L1(alpha, b + eps) if noise else EqualityTo(b)
    mesh = uniform_mesh_1d(n_intervals)
    spec = ProblemSpec(L, PwLinearFamily(mesh, tuple(a)), f, settings or SolverSettings())
    return Instance(spec, truth, np.array([c]), {"levels": levels, "noise": eps})


def real_trig_2d(rng, order: int) -> callable:
    """Random real 2D trigonometric polynomial with frequencies ``|j|, |k| <= order``."""
    freqs = [(j, k) for j in range(order + 1) for k in range(-order, order + 1) if j > 0 or k >= 0]
    F = np.array(freqs, dtype=float)
    decay = 1.0 / np.maximum(1.0, np.abs(F).sum(axis=1))
    ca = rng.standard_normal(len(F)) * decay
    sa = rng.standard_normal(len(F)) * decay
    sa[0] = 0.0  # the (0, 0) term has no sine part

    def a(p):
        ph = 2 * np.pi * (F @ np.asarray(p, dtype=float))
        return float(ca @ np.cos(ph) + sa @ np.sin(ph))

    return a


def identity_2d_box(seed: int, grid: int = 10, order: int = 5, m: int = 30, n_atoms: int = 3,
                    slack: float = 0.01, settings: SolverSettings | None = None) -> Instance:
    """Trigonometric measurements linearized on ``grid x grid`` squares, box fidelity.

    The box half-width of measurement ``i`` is the linearization error of
    the true measurement plus ``slack``, so the ground truth is feasible.
    """
    rng = make_rng(seed)
    mesh = uniform_mesh_2d(grid)
    funcs = [real_trig_2d(rng, order) for _ in range(m)]
    rho = [linearize(a, mesh) for a in funcs]
    x = rng.uniform(0.05, 0.95, (n_atoms, 2))
    w = _nonzero_uniform(rng, n_atoms, floor=0.3)
    mu = DiscreteMeasure(x, w)
    b_true = np.array([sum(wk * a(xk) for xk, wk in zip(x, w)) for a in funcs])
    b_lin = measure_pwl(mu, rho)
    half = np.abs(b_true - b_lin) + slack
    spec = ProblemSpec(Identity(dim=2, domain=(0.0, 1.0)), PwLinearFamily(mesh, tuple(rho)),
                       BoxQuant(b_true, 1.0 / half), settings or SolverSettings())
    return Instance(spec, mu, extra={"b_lin": b_lin})


def random_gamma(rng, m: int, N: int) -> GammaMatrix:
    """``gamma_{j,i} = xi_{j,i} / max(j, 1)`` for ``j >= 0``, Hermitian extension below."""
    xi = rng.standard_normal((N + 1, m)) + 1j * rng.standard_normal((N + 1, m))
    xi[0] = xi[0].real
    g = xi / np.maximum(np.arange(N + 1), 1)[:, None]
    return GammaMatrix(N, np.vstack([np.conj(g[1:][::-1]), g]))


def fourier_gamma(K: int) -> GammaMatrix:
    """Real Fourier measurements ``1, cos(2 pi j t), sin(2 pi j t)`` for j = 1..K (m = 2K + 1)."""
    cols = [TrigPoly.from_real(K, const=1.0).coeffs]
    for j in range(K):
        e = np.eye(K)[j]
        cols += [TrigPoly.from_real(K, cos=e).coeffs, TrigPoly.from_real(K, sin=e).coeffs]
    return GammaMatrix(K, np.column_stack(cols))


def trig_sweep_instance(seed: int, m: int = 35, N: int = 50, n_spikes: int = 5, displacement: float = 0.02):
    rng = make_rng(seed)
    G = random_gamma(rng, m, N)
    x = np.mod(np.arange(1, n_spikes + 1) / n_spikes + rng.uniform(-displacement, displacement, n_spikes), 1.0)
    w = rng.standard_normal(n_spikes)
    mu = DiscreteMeasure(x, w).sorted()
    return G, mu, measure_with_trig(mu, G)


def relative_input_error(G: GammaMatrix, mu: DiscreteMeasure, b, K: int) -> float:
    return float(np.linalg.norm(measure_with_trig(mu, G.truncate(K)) - b) / np.linalg.norm(b))


def measure_distance(a: DiscreteMeasure, b: DiscreteMeasure, periodic: bool = False) -> tuple[float, float]:
    """Max position and weight errors after matching atoms in sorted order (inf if counts differ)."""
    if len(a) != len(b):
        return np.inf, np.inf
    if len(a) == 0:
        return 0.0, 0.0
    a, b = a.sorted(), b.sorted()
    if periodic:
        dp = float(np.max(torus_dist(a.positions[:, 0], b.positions[:, 0])))
    else:
        dp = float(np.max(np.abs(a.positions - b.positions)))
    return dp, float(np.max(np.abs(a.weights - b.weights)))


def coarse_measure(mu: DiscreteMeasure, tol: float, periodic: bool = False) -> DiscreteMeasure:
    """Merge same-sign neighbours closer than ``tol`` (barycenter), then drop atoms lighter than ``tol``.

    1D only. Used to compare a solution against ground truth at resolution ``tol``.
    """
    if len(mu) == 0:
        return mu
    mu = mu.sorted()
    x, w = list(mu.positions[:, 0]), list(mu.weights)
    groups = [[0]]
    for i in range(1, len(x)):
        j = groups[-1][-1]
        if x[i] - x[j] < tol and np.sign(w[i]) == np.sign(w[j]):
            groups[-1].append(i)
        else:
            groups.append([i])
    if periodic and len(groups) > 1:
        a, z = groups[0][0], groups[-1][-1]
        if x[a] + 1.0 - x[z] < tol and np.sign(w[a]) == np.sign(w[z]):
            groups[0] = groups.pop() + groups[0]
    px, pw = [], []
    for g in groups:
        gx = np.array([x[i] for i in g])
        if periodic:
            gx = np.where(gx < gx[-1] - 0.5, gx + 1.0, gx)
        gw = np.array([w[i] for i in g])
        px.append(float(np.mod(gx @ np.abs(gw) / np.abs(gw).sum(), 1.0)) if periodic else float(gx @ np.abs(gw) / np.abs(gw).sum()))
        pw.append(float(gw.sum()))
    keep = np.abs(pw) >= tol
    return DiscreteMeasure(np.array(px)[keep], np.array(pw)[keep]).sorted()


# ---------------------------------------------------------------- runners

@dataclass
class ExperimentConfig:
    name: str
    seed: int = 1234
    overrides: dict = field(default_factory=dict)
    out_dir: Path | None = None
    plot: bool = True
    settings: SolverSettings = field(default_factory=SolverSettings)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _single(cfg: ExperimentConfig, inst: Instance) -> dict:
    out = solve_full(inst.spec)
    sparse = out.signal.measure
    periodic = False
    dp, dw = measure_distance(sparse, inst.truth, periodic)
    summary = {
        "name": cfg.name, "seed": cfg.seed, "overrides": cfg.overrides, "report": out.report.to_dict(),
        "truth": to_rows(inst.truth), "truth_kernel_coeffs": inst.truth_c, "recovered": to_rows(sparse),
        "position_error": dp, "weight_error": dw,
    }
    if cfg.out_dir is not None:
        d = Path(cfg.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_csv(inst.truth, d / "atoms_true.csv")
        write_csv(out.raw, d / "atoms_raw.csv")
        write_csv(sparse, d / "atoms_sparse.csv")
        _write_json(d / "report.json", summary)
        if cfg.plot:
            if isinstance(inst.spec.operator, Derivative1D):
                s = np.linspace(0.0, 1.0, 1001)
                from .operators import reconstruct
                true_sig = reconstruct(inst.spec.operator, inst.truth, inst.truth_c)
                svg = step_plot(s, [("true", eval_signal(true_sig, s)), ("recovered", eval_signal(out.signal, s))])
            else:
                svg = measure_plot([("true", inst.truth), ("raw", out.raw.drop_small()), ("sparsified", sparse)])
            (d / "plot.svg").write_text(svg)
    return summary


def run_pwl_1d_identity(cfg: ExperimentConfig) -> dict:
    return _single(cfg, pwl_1d_identity(cfg.seed, settings=cfg.settings, **cfg.overrides))


def run_deriv_1d(cfg: ExperimentConfig) -> dict:
    return _single(cfg, deriv_1d(cfg.seed, settings=cfg.settings, **cfg.overrides))


def run_2d_identity_box(cfg: ExperimentConfig) -> dict:
    return _single(cfg, identity_2d_box(cfg.seed, settings=cfg.settings, **cfg.overrides))


def run_trig_sweep(cfg: ExperimentConfig) -> dict:
    ov = dict(cfg.overrides)
    Ks = list(ov.pop("K", range(10, 51)))
    lam = float(ov.pop("lam", 100.0))
    G, mu, b = trig_sweep_instance(cfg.seed, **ov)
    d = Path(cfg.out_dir) if cfg.out_dir is not None else None
    if d is not None:
        d.mkdir(parents=True, exist_ok=True)
        write_csv(mu, d / "atoms_true.csv")
    rows = []
    plots = [("true", mu)]
    for K in Ks:
        entry = {"K": int(K), "relative_input_error": relative_input_error(G, mu, b, K)}
        try:
            spec = ProblemSpec(Identity(), TrigFamily(G.truncate(K)), Quadratic(lam, b), cfg.settings)
            out = solve_full(spec)
            rec = out.signal.measure
            dp, dw = measure_distance(rec, mu, periodic=True)
            entry.update(status=out.report.status, primal_objective=out.report.primal_objective,
                         dual_objective=out.report.dual_objective, gap=out.report.gap, atoms=len(rec),
                         position_error=dp, weight_error=dw, recovered=to_rows(rec))
            if d is not None:
                write_csv(rec, d / f"atoms_K{K:02d}.csv")
            if K == Ks[-1]:
                plots.append((f"K={K}", rec))
        except Exception as exc:  # a hard K must not abort the sweep
            log.warning("trig sweep: K=%d failed: %s", K, exc)
            entry.update(status="failed", error=str(exc))
        rows.append(entry)
    summary = {"name": cfg.name, "seed": cfg.seed, "overrides": cfg.overrides, "truth": to_rows(mu), "sweep": rows}
    if d is not None:
        _write_json(d / "report.json", summary)
        if cfg.plot:
            (d / "plot.svg").write_text(measure_plot(plots))
    return summary


EXPERIMENTS = {
    "pwl-1d-identity": run_pwl_1d_identity,
    "deriv-1d": run_deriv_1d,
    "2d-identity-box": run_2d_identity_box,
    "trig-sweep": run_trig_sweep,
}


def run_experiment(cfg: ExperimentConfig) -> dict:
    try:
        runner = EXPERIMENTS[cfg.name]
    except KeyError:
        raise ValueError(f"unknown experiment {cfg.name!r}; choose from {', '.join(EXPERIMENTS)}") from None
    return runner(cfg)
