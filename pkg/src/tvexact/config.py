"""JSON problem files.

Schema (all keys optional unless marked)::

    {
      "operator":     {"kind": "identity" | "derivative", "dim": 1, "torus": false},
      "measurements": (required) one of
          {"family": "pwl", "mesh": {"cells": 20} | {"grid2d": 10} | {"file": "mesh.txt"},
           "functions": {"random": 12, "seed": 0} | {"file": "rho.csv"}}
          {"family": "piecewise_constant", "intervals": 10,
           "functions": {"random": 42, "seed": 0} | {"values": [[...], ...]}}
          {"family": "trig", "gamma": {"file": "gamma.csv"} | {"random": {"m": 35, "N": 50, "seed": 0}},
           "K": 30}
      "fidelity":     {"kind": "equality" | "quadratic" | "l1" | "box", "lam": 1.0, "C": [...], "tol": 0.0},
      "data":         (required) {"b": [...]} | {"truth": {"positions": [...], "weights": [...], "kernel": [...]}},
      "solver":       {"eps_abs": 1e-9, "eps_rel": 1e-9, "max_iter": 200000, ...},
      "purify": true, "amp_threshold": 1e-8, "formulation": "gram" | "bounded_real"
    }

Relative file paths resolve against the directory of the JSON file.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .conic.admm import SolverSettings
from .fidelity import make_fidelity
from .measure import AMP_THRESHOLD, DiscreteMeasure
from .operators import Derivative1D, PiecewiseConstant, kernel_pairing, make_operator, pinv_adjoint
from .pipeline import PwLinearFamily, ProblemSpec, TrigFamily
from .pwlinear import measure_pwl, random_pwl_measurements, read_functions_csv, read_mesh, uniform_mesh_1d, \
    uniform_mesh_2d
from .trig import read_gamma_csv, measure_with_trig


class SpecError(ValueError):
    """The problem file is malformed or inconsistent."""


def _rng(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def _path(base: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else base / p


def _mesh(cfg: dict, base: Path):
    if "cells" in cfg:
        return uniform_mesh_1d(int(cfg["cells"]))
    if "grid2d" in cfg:
        return uniform_mesh_2d(int(cfg["grid2d"]))
    if "file" in cfg:
        return read_mesh(_path(base, cfg["file"]))
    raise SpecError("mesh needs one of 'cells', 'grid2d', 'file'")


def _family(cfg: dict, base: Path):
    kind = cfg.get("family")
    if kind == "pwl":
        mesh = _mesh(cfg.get("mesh", {}), base)
        fn = cfg.get("functions", {})
        if "file" in fn:
            rho = read_functions_csv(_path(base, fn["file"]), mesh)
        elif "random" in fn:
            rho = random_pwl_measurements(mesh, int(fn["random"]), _rng(fn.get("seed", 0)))
        else:
            raise SpecError("pwl functions need 'file' or 'random'")
        return PwLinearFamily(mesh, tuple(rho))
    if kind == "piecewise_constant":
        n = int(cfg.get("intervals", 10))
        bp = np.linspace(0.0, 1.0, n + 1)
        fn = cfg.get("functions", {})
        if "values" in fn:
            vals = np.asarray(fn["values"], dtype=float)
        elif "random" in fn:
            vals = _rng(fn.get("seed", 0)).standard_normal((int(fn["random"]), n))
        else:
            raise SpecError("piecewise_constant functions need 'values' or 'random'")
        if vals.ndim != 2 or vals.shape[1] != n:
            raise SpecError(f"piecewise_constant values must have {n} columns")
        return PwLinearFamily(uniform_mesh_1d(n), tuple(PiecewiseConstant(bp, v) for v in vals))
    if kind == "trig":
        g = cfg.get("gamma", {})
        if "file" in g:
            G = read_gamma_csv(_path(base, g["file"]))
        elif "random" in g:
            from .experiments import random_gamma
            r = g["random"]
            G = random_gamma(_rng(r.get("seed", 0)), int(r["m"]), int(r["N"]))
        else:
            raise SpecError("trig gamma needs 'file' or 'random'")
        if "K" in cfg:
            G = G.truncate(int(cfg["K"]))
        return TrigFamily(G)
    raise SpecError(f"unknown measurement family {kind!r}; expected pwl, piecewise_constant or trig")


def _data(cfg: dict, family, operator) -> np.ndarray:
    if "b" in cfg:
        return np.asarray(cfg["b"], dtype=float)
    if "truth" not in cfg:
        raise SpecError("data needs 'b' or 'truth'")
    t = cfg["truth"]
    mu = DiscreteMeasure(np.asarray(t["positions"], dtype=float), np.asarray(t["weights"], dtype=float))
    c = np.asarray(t.get("kernel", [0.0] * operator.kernel_dim), dtype=float)
    if isinstance(family, TrigFamily):
        G = family.rho_gamma(operator)
        return measure_with_trig(mu, G, c, family.kernel_rows(operator))
    if isinstance(operator, Derivative1D):
        x = mu.positions[:, 0]
        return np.array([c[0] * kernel_pairing(a) + float(pinv_adjoint(operator, a)(x) @ mu.weights)
                         for a in family.functions])
    return measure_pwl(mu, family.functions)


def _settings(cfg: dict) -> SolverSettings:
    names = {f.name for f in dataclasses.fields(SolverSettings)}
    unknown = set(cfg) - names
    if unknown:
        raise SpecError(f"unknown solver settings: {', '.join(sorted(unknown))}")
    return SolverSettings(**cfg)


def spec_from_dict(d: dict, base: Path | str = ".") -> ProblemSpec:
    base = Path(base)
    try:
        op_cfg = dict(d.get("operator", {"kind": "identity"}))
        operator = make_operator(op_cfg.pop("kind", "identity"), **op_cfg)
        if "measurements" not in d:
            raise SpecError("missing 'measurements'")
        family = _family(d["measurements"], base)
        b = _data(d.get("data", {}), family, operator)
        fcfg = dict(d.get("fidelity", {"kind": "equality"}))
        fid = make_fidelity(fcfg.pop("kind", "equality"), b, **fcfg)
        return ProblemSpec(operator, family, fid, _settings(d.get("solver", {})), purify=bool(d.get("purify", True)),
                           amp_threshold=float(d.get("amp_threshold", AMP_THRESHOLD)),
                           formulation=d.get("formulation", "gram"))
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(str(exc)) from exc


def load_spec(path) -> ProblemSpec:
    """Read a JSON problem file. Raises ``OSError`` for IO and :class:`SpecError` for content."""
    path = Path(path)
    text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: {exc}") from exc
    if not isinstance(d, dict):
        raise SpecError(f"{path}: top level must be an object")
    return spec_from_dict(d, path.parent)
