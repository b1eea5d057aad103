"""Trigonometric sweep over K for several seeds: mean relative input error and the K = N match.

    python scripts/trig_sweep.py --seeds 0 1 2 3 4 --solve-all
"""

import argparse
from dataclasses import dataclass, field

import numpy as np

from tvexact.experiments import coarse_measure, measure_distance, relative_input_error, trig_sweep_instance
from tvexact.fidelity import Quadratic
from tvexact.operators import Identity
from tvexact.pipeline import ProblemSpec, TrigFamily, solve_full


@dataclass
class SweepConfig:
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    Ks: list[int] = field(default_factory=lambda: list(range(10, 51)))
    lam: float = 100.0
    solve_all: bool = False


def main(cfg: SweepConfig) -> None:
    errs = np.zeros((len(cfg.seeds), len(cfg.Ks)))
    for r, seed in enumerate(cfg.seeds):
        G, mu, b = trig_sweep_instance(seed)
        errs[r] = [relative_input_error(G, mu, b, K) for K in cfg.Ks]
        for K in cfg.Ks if cfg.solve_all else [cfg.Ks[-1]]:
            out = solve_full(ProblemSpec(Identity(), TrigFamily(G.truncate(K)), Quadratic(cfg.lam, b)))
            rec = out.signal.measure
            dp, dw = measure_distance(coarse_measure(rec, 1e-3, periodic=True), mu, periodic=True)
            print(f"seed={seed} K={K:2d} atoms={len(rec)} gap={out.report.gap:.1e} "
                  f"position_error={dp:.2e} weight_error={dw:.2e}")
    print("K,mean_relative_input_error")
    for K, e in zip(cfg.Ks, errs.mean(axis=0)):
        print(f"{K},{e:.4f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--kmin", type=int, default=10)
    ap.add_argument("--kmax", type=int, default=50)
    ap.add_argument("--solve-all", action="store_true")
    a = ap.parse_args()
    main(SweepConfig(a.seeds, list(range(a.kmin, a.kmax + 1)), solve_all=a.solve_all))
