"""Grid refinement on a fixed trigonometric instance (identity operator, quadratic data term)."""

import argparse

from tvexact.experiments import make_rng, random_gamma
from tvexact.fidelity import Quadratic
from tvexact.measure import DiscreteMeasure
from tvexact.pipeline import grid_refinement_study
from tvexact.trig import measure_with_trig

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--h", default="0.1,0.05,0.025,0.0125")
    a = ap.parse_args()
    G = random_gamma(make_rng(a.seed), 10, 5)
    mu = DiscreteMeasure([0.137, 0.512, 0.803], [1.0, -0.7, 0.5])
    rows, ref = grid_refinement_study(G, Quadratic(100.0, measure_with_trig(mu, G)), [float(h) for h in a.h.split(",")])
    print(f"continuous optimum {ref:.8f}")
    prev = None
    for r in rows:
        ratio = "" if prev is None else f"  ratio {prev / r.gap:.2f}"
        print(f"h={r.h:<8g} objective={r.objective:.8f} gap={r.gap:.3e} atoms={r.atoms}{ratio}")
        prev = r.gap
