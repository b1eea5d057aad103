"""Command line: ``tvexact solve | experiment | refine | export-conic``.

Exit codes: 0 success, 2 solver non-convergence, 3 invalid spec, 4 IO error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .conic.admm import SolverError
from .conic.problem import save
from .config import SpecError, load_spec
from .experiments import EXPERIMENTS, ExperimentConfig, _json_default, run_experiment
from .finite import primal_problem
from .measure import write_csv
from .operators import Identity
from .pipeline import PwLinearFamily, TrigFamily, grid_refinement_study, solve_full
from .pwlinear import value_matrix
from .trig import ContinuumCertificateError, assemble_dual_sdp

log = logging.getLogger("tvexact")

EXIT_OK, EXIT_SOLVER, EXIT_SPEC, EXIT_IO = 0, 2, 3, 4


def _dump(obj, path: Path | None = None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def cmd_solve(args) -> int:
    spec = load_spec(args.spec)
    out = solve_full(spec)
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    write_csv(out.raw, d / "atoms_raw.csv")
    write_csv(out.signal.measure, d / "atoms_sparse.csv")
    _dump(out.report.to_dict(), d / "report.json")
    r = out.report
    print(f"{r.route}: status={r.status} primal={r.primal_objective:.10g} dual={r.dual_objective:.10g} "
          f"gap={r.gap:.3g} atoms={r.atoms_before}->{r.atoms_after_sparsify}")
    return EXIT_OK if r.status == "optimal" else EXIT_SOLVER


def _parse_value(s: str):
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        return s


def cmd_experiment(args) -> int:
    overrides = {}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise SpecError(f"--set expects key=value, got {item!r}")
        overrides[key] = _parse_value(val)
    cfg = ExperimentConfig(args.name, args.seed, overrides, Path(args.out), plot=not args.no_plot)
    try:
        summary = run_experiment(cfg)
    except TypeError as exc:  # bad override name
        raise SpecError(str(exc)) from exc
    if "sweep" in summary:
        for row in summary["sweep"]:
            print(f"K={row['K']:3d} rel_input_error={row['relative_input_error']:.4f} status={row['status']}"
                  + (f" atoms={row['atoms']}" if "atoms" in row else ""))
        failed = [r for r in summary["sweep"] if r["status"] != "optimal"]
        return EXIT_SOLVER if failed else EXIT_OK
    r = summary["report"]
    print(f"{args.name}: status={r['status']} atoms={r['atoms_before']}->{r['atoms_after_sparsify']} "
          f"position_error={summary['position_error']:.3g} weight_error={summary['weight_error']:.3g}")
    return EXIT_OK if r["status"] == "optimal" else EXIT_SOLVER


def cmd_refine(args) -> int:
    spec = load_spec(args.spec)
    if not isinstance(spec.family, TrigFamily) or not isinstance(spec.operator, Identity):
        raise SpecError("refine needs trigonometric measurements and the identity operator")
    hs = [float(h) for h in args.h.split(",") if h.strip()]
    rows, ref = grid_refinement_study(spec.family.gamma, spec.fidelity, hs, settings=spec.settings)
    print(f"reference {ref:.10g}")
    print("h,objective,gap,atoms")
    for r in rows:
        print(f"{r.h:g},{r.objective:.10g},{r.gap:.6g},{r.atoms}")
    return EXIT_OK


def cmd_export(args) -> int:
    spec = load_spec(args.spec)
    L, fam, f = spec.operator, spec.family, spec.fidelity
    zero_sum = bool(getattr(L, "torus", False))
    if isinstance(fam, PwLinearFamily):
        prob = primal_problem(fam.kernel_cols(L), value_matrix(fam.rho(L), fam.mesh), f, zero_sum)[0]
    else:
        prob = assemble_dual_sdp(fam.rho_gamma(L), fam.kernel_rows(L), f, free_constant=zero_sum,
                                 formulation=spec.formulation).problem
    save(prob, args.out)
    print(f"wrote {args.out}: {prob.n_vars} variables, {prob.n_rows} rows")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvexact", description="Exact TV-regularized recovery of measures.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("solve", help="solve a JSON problem file")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="run a built-in experiment")
    e.add_argument("--name", required=True, choices=sorted(EXPERIMENTS))
    e.add_argument("--seed", type=int, default=1234)
    e.add_argument("--out", required=True)
    e.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a generator parameter (JSON value)")
    e.add_argument("--no-plot", action="store_true")
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("refine", help="grid refinement study on a trigonometric problem")
    r.add_argument("--spec", required=True)
    r.add_argument("--h", default="0.1,0.05,0.025")
    r.set_defaults(func=cmd_refine)

    x = sub.add_parser("export-conic", help="write the conic program in text form")
    x.add_argument("--spec", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolverError, ContinuumCertificateError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
