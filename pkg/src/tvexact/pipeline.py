"""End-to-end solves: problem assembly, route dispatch, reports and checks."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .conic.admm import SolverSettings
from .fidelity import EqualityTo, Fidelity
from .finite import refit_exact, solve_primal
from .measure import AMP_THRESHOLD, DiscreteMeasure, tv_norm
from .operators import (Derivative1D, EvaluableSignal, Identity, PiecewiseLinear,
                        RegularizerOp, kernel_pairing, pinv_adjoint, reconstruct, trig_adjoint)
from .pwlinear import (PwLinearFn, SimplicialMesh, solve_vertex_dual, solve_vertex_primal, sparsify_solution,
                       uniform_mesh_1d, value_matrix)
from .trig import (GammaMatrix, TrigPoly, certificate_poly, find_unit_modulus_roots, solve_dual_sdp,
                   torus_dist)

log = logging.getLogger(__name__)

CERT_GRID = 10_000


# ---------------------------------------------------------------- families

@dataclass(frozen=True, eq=False)
class PwLinearFamily:
    """Measurement functions that are piecewise linear after ``(L+)^*``.

    ``functions`` holds either :class:`PwLinearFn` on ``mesh`` (identity) or
    1D :class:`PiecewiseConstant` whose breakpoints are the vertices of
    ``mesh`` (derivative).
    """

    mesh: SimplicialMesh
    functions: tuple

    @property
    def m(self) -> int:
        return len(self.functions)

    def rho(self, L: RegularizerOp) -> list[PwLinearFn]:
        out = []
        for a in self.functions:
            if isinstance(L, Identity):
                if not isinstance(a, PwLinearFn):
                    raise TypeError("identity route expects PwLinearFn measurements")
                out.append(a)
                continue
            r = pinv_adjoint(L, a)
            if not isinstance(r, PiecewiseLinear):
                raise TypeError("derivative route expects piecewise-constant measurements")
            verts = self.mesh.vertices[:, 0]
            out.append(PwLinearFn(self.mesh, r(verts)))
        return out

    def kernel_cols(self, L: RegularizerOp) -> np.ndarray:
        if L.kernel_dim == 0:
            return np.zeros((self.m, 0))
        return np.array([[kernel_pairing(a)] for a in self.functions]).reshape(self.m, 1)


@dataclass(frozen=True, eq=False)
class TrigFamily:
    """``gamma`` holds the coefficients of the measurement functions ``a_i``."""

    gamma: GammaMatrix

    @property
    def m(self) -> int:
        return self.gamma.m

    def rho_gamma(self, L: RegularizerOp) -> GammaMatrix:
        if isinstance(L, Identity):
            return self.gamma
        cols = [trig_adjoint(self.gamma.column(i)).coeffs for i in range(self.m)]
        return GammaMatrix(self.gamma.K, np.column_stack(cols))

    def kernel_rows(self, L: RegularizerOp) -> list[np.ndarray]:
        return [] if L.kernel_dim == 0 else [self.gamma.kernel_row()]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    operator: RegularizerOp
    family: PwLinearFamily | TrigFamily
    fidelity: Fidelity
    settings: SolverSettings = field(default_factory=SolverSettings)
    purify: bool = True
    amp_threshold: float = AMP_THRESHOLD
    formulation: str = "gram"

    def __post_init__(self):
        if self.family.m != self.fidelity.m:
            raise ValueError(f"{self.family.m} measurement functions but data of length {self.fidelity.m}")
        if isinstance(self.family, TrigFamily) and isinstance(self.operator, Derivative1D) and not self.operator.torus:
            raise ValueError("trigonometric measurements with the derivative need Derivative1D(torus=True)")

    @property
    def m(self) -> int:
        return self.family.m

    def kernel_matrix(self) -> np.ndarray:
        if isinstance(self.family, TrigFamily):
            rows = self.family.kernel_rows(self.operator)
            return np.column_stack(rows) if rows else np.zeros((self.m, 0))
        return self.family.kernel_cols(self.operator)

    def m_bar(self) -> int:
        Mk = self.kernel_matrix()
        return self.m - (int(np.linalg.matrix_rank(Mk)) if Mk.size else 0)


@dataclass
class SolveReport:
    route: str
    status: str
    primal_objective: float
    dual_objective: float
    gap: float
    m: int
    m_bar: int
    atoms_before: int
    atoms_after_sparsify: int
    certificate_max: float
    residuals: dict
    wall_time: float
    kernel_coeffs: list = field(default_factory=list)
    q: list = field(default_factory=list)
    kappa: float = 0.0
    roots: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveOutput:
    signal: EvaluableSignal
    report: SolveReport
    raw: DiscreteMeasure  # before thresholding/purification/sparsification
    before: DiscreteMeasure  # what gets sparsified


def _zero_sum(spec: ProblemSpec) -> bool:
    return isinstance(spec.operator, Derivative1D) and spec.operator.torus


def solve_analysis_problem(spec: ProblemSpec) -> tuple[EvaluableSignal, SolveReport]:
    out = solve_full(spec)
    return out.signal, out.report


def solve_full(spec: ProblemSpec) -> SolveOutput:
    if isinstance(spec.family, PwLinearFamily):
        return _solve_pwl(spec)
    return _solve_trig(spec)


def _solve_pwl(spec: ProblemSpec) -> SolveOutput:
    t0 = time.perf_counter()
    L, fam, f = spec.operator, spec.family, spec.fidelity
    rho = fam.rho(L)
    Mk = fam.kernel_cols(L)
    vs = solve_vertex_primal(fam.mesh, rho, f, Mk, spec.settings, purify=spec.purify,
                             amp_threshold=spec.amp_threshold, zero_sum=_zero_sum(spec))
    q, dual_val, dsol = solve_vertex_dual(fam.mesh, rho, f, Mk, spec.settings, zero_sum=_zero_sum(spec))
    sparse = sparsify_solution(vs.measure, fam.mesh, spec.amp_threshold)
    eta_max = float(np.max(np.abs(value_matrix(rho, fam.mesh).T @ q), initial=0.0))
    psol = vs.result.solution
    status = "optimal" if (psol is None or psol.optimal) and dsol.optimal else "not_converged"
    report = SolveReport(
        route="vertex_primal", status=status, primal_objective=vs.objective, dual_objective=dual_val,
        gap=vs.objective - dual_val, m=spec.m, m_bar=spec.m_bar(), atoms_before=len(vs.measure),
        atoms_after_sparsify=len(sparse), certificate_max=eta_max, residuals=vs.result.residuals,
        wall_time=time.perf_counter() - t0, kernel_coeffs=[float(v) for v in vs.c], q=[float(v) for v in q],
    )
    return SolveOutput(reconstruct(L, sparse, vs.c), report, vs.raw, vs.measure)


def _solve_trig(spec: ProblemSpec) -> SolveOutput:
    t0 = time.perf_counter()
    L, fam, f = spec.operator, spec.family, spec.fidelity
    G = fam.rho_gamma(L)
    kr = fam.kernel_rows(L)
    zs = _zero_sum(spec)
    dual = solve_dual_sdp(G, kr, f, spec.settings, free_constant=zs, formulation=spec.formulation)
    eta = certificate_poly(dual.q, G, dual.kappa)
    roots = find_unit_modulus_roots(eta)
    pos = roots.positions
    mu, c, obj, residuals = refit_primal(pos, G, kr, f, spec.settings, zero_sum=zs)
    grid = np.linspace(0.0, 1.0, CERT_GRID, endpoint=False)
    eta_max = float(np.max(np.abs(eta(grid)), initial=0.0))
    status = "optimal" if dual.solution.optimal else "not_converged"
    report = SolveReport(
        route="dual_sdp", status=status, primal_objective=obj, dual_objective=dual.value,
        gap=obj - dual.value, m=spec.m, m_bar=spec.m_bar(), atoms_before=len(pos), atoms_after_sparsify=len(mu),
        certificate_max=eta_max, residuals=residuals, wall_time=time.perf_counter() - t0,
        kernel_coeffs=[float(v) for v in c], q=[float(v) for v in dual.q], kappa=dual.kappa,
        roots=[float(t) for t in pos],
    )
    raw = DiscreteMeasure(pos, np.zeros(len(pos)))
    return SolveOutput(reconstruct(L, mu, c), report, raw, mu)


def refit_primal(positions, G: GammaMatrix, kernel_rows, f: Fidelity, settings=None, zero_sum=False,
                 amp_threshold: float = AMP_THRESHOLD):
    """Finite primal at fixed positions; returns ``(measure, c, objective, residuals)``."""
    pos = np.asarray(positions, dtype=float).ravel()
    Ma = G.eval_matrix(pos).T if len(pos) else np.zeros((G.m, 0))
    Mk = np.column_stack(kernel_rows) if kernel_rows else np.zeros((G.m, 0))
    fit = refit_exact(Mk, Ma, f.b, zero_sum) if isinstance(f, EqualityTo) else None
    if fit is not None:
        c, d = fit
        res = np.linalg.norm(Mk @ c + Ma @ d - f.b, np.inf)
        residuals = {"primal": float(res), "dual": 0.0, "gap": 0.0}
        obj = float(np.sum(np.abs(d)))
    else:
        r = solve_primal(Mk, Ma, f, settings, zero_sum=zero_sum)
        c, d, obj, residuals = r.c, r.d, r.objective, r.residuals
    keep = np.abs(d) >= amp_threshold
    mu = DiscreteMeasure(pos[keep], d[keep])
    if not isinstance(f, EqualityTo):
        obj = float(f.eval(Mk @ c + Ma[:, keep] @ d[keep]) + tv_norm(mu))
    return mu.sorted(), c, obj, residuals


# ---------------------------------------------------------------- verification

@dataclass
class Check:
    passed: bool
    value: float
    tol: float


@dataclass
class VerificationRecord:
    support_in_unit_set: Check
    certificate_bounded: Check
    gap: Check

    @property
    def passed(self) -> bool:
        return self.support_in_unit_set.passed and self.certificate_bounded.passed and self.gap.passed

    def to_dict(self) -> dict:
        return {k: asdict(v) for k, v in vars(self).items()} | {"passed": self.passed}


def certificate_of(spec: ProblemSpec, q, kappa: float = 0.0):
    """The dual certificate ``eta = (L+)^* A^* q`` as an evaluable function."""
    q = np.asarray(q, dtype=float)
    if isinstance(spec.family, TrigFamily):
        return certificate_poly(q, spec.family.rho_gamma(spec.operator), kappa)
    rho = spec.family.rho(spec.operator)
    vals = value_matrix(rho, spec.family.mesh).T @ q + kappa
    return PwLinearFn(spec.family.mesh, vals)


def verify_certificate(signal: EvaluableSignal, q, spec: ProblemSpec, tol: float = 1e-6, kappa: float = 0.0,
                       gap: float | None = None) -> VerificationRecord:
    """Support inclusion, certificate bound on a grid and the duality gap."""
    eta = certificate_of(spec, q, kappa)
    atoms = signal.measure.positions
    if isinstance(eta, TrigPoly):
        grid = np.linspace(0.0, 1.0, CERT_GRID, endpoint=False)
        vals = np.abs(eta(grid))
        roots = find_unit_modulus_roots(eta) if len(atoms) else None
        if len(atoms):
            if len(roots):
                dist = max(float(np.min(torus_dist(x, roots.positions))) for x in atoms[:, 0])
            else:
                dist = np.inf
        else:
            dist = 0.0
    else:
        vals = np.abs(eta.vertex_values)
        # piecewise linear: |eta| = 1 at an atom is the inclusion test
        dist = max((1.0 - abs(eta(x if len(x) > 1 else x[0])) for x in atoms), default=0.0)
    sup = Check(dist <= tol, float(dist), tol)
    bound = Check(float(vals.max(initial=0.0)) <= 1.0 + tol, float(vals.max(initial=0.0)), tol)
    g = 0.0 if gap is None else float(gap)
    return VerificationRecord(sup, bound, Check(abs(g) <= tol * (1.0 + abs(g)), g, tol))


# ---------------------------------------------------------------- refinement

@dataclass
class RefinementRow:
    h: float
    objective: float
    gap: float
    atoms: int


def grid_refinement_study(G: GammaMatrix, f: Fidelity, hs, reference: float | None = None,
                          settings: SolverSettings | None = None) -> tuple[list[RefinementRow], float]:
    """Vertex-primal objectives on uniform meshes of width ``h`` vs the continuous optimum.

    The measurement functions (trigonometric, identity operator) are
    linearized on each mesh. ``reference`` defaults to the dual SDP optimum.
    """
    hs = list(hs)
    if not hs:
        return [], float("nan") if reference is None else reference
    if reference is None:
        reference = solve_dual_sdp(G, [], f, settings).value
    rows = []
    for h in hs:
        n = int(round(1.0 / h))
        if n < 1 or abs(n * h - 1.0) > 1e-9:
            raise ValueError(f"mesh width {h} does not divide [0, 1]")
        mesh = uniform_mesh_1d(n)
        vals = G.eval_matrix(mesh.vertices[:, 0]).T
        rho = [PwLinearFn(mesh, v) for v in vals]
        vs = solve_vertex_primal(mesh, rho, f, None, settings, purify=False)
        rows.append(RefinementRow(h, vs.objective, vs.objective - reference, len(vs.measure)))
    return rows, reference

