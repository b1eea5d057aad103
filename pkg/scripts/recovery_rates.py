"""Exact-recovery rates of the piecewise-linear and derivative experiments over many seeds.

    python scripts/recovery_rates.py --seeds 100
"""

import argparse
from dataclasses import dataclass

import numpy as np

from tvexact.experiments import deriv_1d, measure_distance, pwl_1d_identity
from tvexact.pipeline import solve_full


@dataclass
class RateConfig:
    seeds: int = 50
    tol: float = 1e-5
    cells: tuple = (10, 20)


def rate(make, seeds, tol):
    hits, sizes = 0, []
    for s in range(seeds):
        inst = make(s)
        out = solve_full(inst.spec)
        dp, dw = measure_distance(out.signal.measure, inst.truth)
        hits += dp <= tol and dw <= tol
        sizes.append(out.report.atoms_before)
    return hits, np.bincount(sizes)


def main(cfg: RateConfig) -> None:
    for n in cfg.cells:
        hits, hist = rate(lambda s: pwl_1d_identity(s, n_cells=n), cfg.seeds, cfg.tol)
        print(f"pwl-1d-identity, {n} cells: exact {hits}/{cfg.seeds}; atoms before sparsify histogram {hist.tolist()}")
    for noise in (False, True):
        hits, _ = rate(lambda s: deriv_1d(s, noise=noise), cfg.seeds, cfg.tol)
        print(f"deriv-1d, noise={noise}: exact {hits}/{cfg.seeds}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--tol", type=float, default=1e-5)
    a = ap.parse_args()
    main(RateConfig(a.seeds, a.tol))
