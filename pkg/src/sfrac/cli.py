"""Command-line front end: JSON config in, CSV/JSON artifacts out.

Exit codes: 0 success; 1 config/schema/expression error (always before any
numerical work); 2 hypothesis conditions failed for a task that needs them
(unless --force); 3 solver failure; 4 verification failure.

Determinism contract: identical config and thread count produce bit-identical
output files — fixed quadrature reduction order, seeded estimators, no
timestamps in any artifact, sorted JSON keys, shortest round-trip decimals.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .coeff import check_conditions, make_profile, parse_expr, evaluate
from .errors import (ConditionsFailed, EvalError, ExprSyntaxError,
                     SolverDiverged, StabilityError)
from .evolve import EvolutionConfig, evolve
from .frac import QuadratureSpec, apply_P_alpha, build_matrix, quad_nodes
from .grid import BoxDomain, Grid, Operators, QuatField, RealField
from .oracle import closed_form_P_alpha, s_spectrum_probe
from .quat import J_E1, J_E2, J_E3, unit_from_components
from .resolvent import SolverOptions

_POS_NUM = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["domain", "grid", "coefficients", "task"],
    "properties": {
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dims", "lengths"],
            "properties": {
                "dims": {"type": "integer", "minimum": 1, "maximum": 3},
                "lengths": {"type": "array", "minItems": 1, "maxItems": 3,
                            "items": _POS_NUM},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n"],
            "properties": {
                "n": {"type": "array", "minItems": 1, "maxItems": 3,
                      "items": {"type": "integer", "minimum": 1}},
            },
        },
        "coefficients": {"type": "array", "minItems": 1, "maxItems": 3,
                         "items": {"type": "string"}},
        "alpha": {"type": "number", "exclusiveMinimum": 0,
                  "exclusiveMaximum": 1},
        "quadrature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_sing": {"type": "integer", "minimum": 4},
                "n_tail": {"type": "integer", "minimum": 4},
                "t_split": _POS_NUM,
                "j": {"oneOf": [
                    {"enum": ["e1", "e2", "e3"]},
                    {"type": "array", "minItems": 3, "maxItems": 3,
                     "items": {"type": "number"}},
                ]},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["auto", "dense", "krylov"]},
                "tol": _POS_NUM,
                "max_iter": {"type": "integer", "minimum": 1},
            },
        },
        "task": {"enum": ["check", "spectrum", "palpha", "evolve", "verify"]},
        "initial": {"type": "string"},
        "time": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": _POS_NUM,
                "t_end": _POS_NUM,
                "scheme": {"enum": ["explicit-rk4", "crank-nicolson"]},
                "snapshot_every": {"type": "integer", "minimum": 0},
                "beta_mode": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}


class ConfigError(ValueError):
    """Config is syntactically valid JSON but semantically unusable."""


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips (CSV cell contract)."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# Config -> objects


def _build_setup(cfg: dict):
    dims = cfg["domain"]["dims"]
    lengths = cfg["domain"]["lengths"]
    if len(lengths) != dims:
        raise ConfigError("domain.lengths must have domain.dims entries")
    if len(cfg["grid"]["n"]) != dims:
        raise ConfigError("grid.n must have domain.dims entries")
    if len(cfg["coefficients"]) != dims:
        raise ConfigError("one coefficient expression per axis required")
    domain = BoxDomain(tuple(lengths))
    grid = Grid(domain, tuple(cfg["grid"]["n"]))
    profiles = tuple(make_profile(ax + 1, text, lengths[ax])
                     for ax, text in enumerate(cfg["coefficients"]))
    ops = Operators(grid, profiles)
    return grid, profiles, ops


def _build_j(qcfg: dict):
    j = qcfg.get("j", "e1")
    if isinstance(j, str):
        return {"e1": J_E1, "e2": J_E2, "e3": J_E3}[j]
    if all(v == 0 for v in j):
        raise ConfigError("quadrature.j must be a nonzero vector")
    return unit_from_components(*j)


def _build_quadrature(cfg: dict, alpha: float) -> QuadratureSpec:
    q = cfg.get("quadrature", {})
    return QuadratureSpec(alpha=alpha, j=_build_j(q),
                          t_split=q.get("t_split", 1.0),
                          n_sing=q.get("n_sing", 64),
                          n_tail=q.get("n_tail", 64))


def _build_solver(cfg: dict) -> SolverOptions:
    s = cfg.get("solver", {})
    return SolverOptions(method=s.get("method", "auto"),
                         tol=s.get("tol", 1e-10),
                         max_iter=s.get("max_iter"))


def _initial_field(cfg: dict, grid: Grid) -> RealField:
    text = cfg.get("initial")
    if text is None:
        # default bump: product of x_l (L_l - x_l), vanishes on the boundary
        vals = np.ones(grid.n)
        mesh = np.meshgrid(*grid.axes, indexing="ij")
        for ax, L in enumerate(grid.domain.lengths):
            vals = vals * mesh[ax] * (L - mesh[ax])
        return RealField(grid, vals)
    names = ("x", "y", "z")[: grid.dims]
    expr = parse_expr(text, variables=names)
    mesh = np.meshgrid(*grid.axes, indexing="ij")
    values = evaluate(expr, **dict(zip(names, mesh)))
    return RealField(grid, np.asarray(values, dtype=float) + np.zeros(grid.n))


def _require_alpha(cfg: dict) -> float:
    if "alpha" not in cfg:
        raise ConfigError(f"task {cfg['task']!r} requires alpha")
    return float(cfg["alpha"])


# ---------------------------------------------------------------------------
# Artifact writers


def _write_json(path: str, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _coords_row(coords: np.ndarray) -> list:
    padded = list(coords) + [0.0] * (3 - len(coords))
    return [_fmt(c) for c in padded]


def _write_fields_csv(path: str, field: QuatField):
    grid = field.grid
    coords = grid.node_coordinates()
    comps = field.components.reshape(4, -1)
    with open(path, "w") as fh:
        fh.write("x1,x2,x3,q0,q1,q2,q3\n")
        for i in range(grid.N):
            row = _coords_row(coords[i]) + [_fmt(comps[c, i]) for c in range(4)]
            fh.write(",".join(row) + "\n")


def _write_snapshot_csv(path: str, field: RealField):
    grid = field.grid
    coords = grid.node_coordinates()
    flat = field.flat()
    with open(path, "w") as fh:
        fh.write("x1,x2,x3,v\n")
        for i in range(grid.N):
            fh.write(",".join(_coords_row(coords[i]) + [_fmt(flat[i])]) + "\n")


def _write_trace_csv(path: str, times, l2s):
    with open(path, "w") as fh:
        fh.write("t,l2\n")
        for t, v in zip(times, l2s):
            fh.write(f"{_fmt(t)},{_fmt(v)}\n")


# ---------------------------------------------------------------------------
# Tasks


def _task_check(cfg, out_dir, force, threads):
    grid, profiles, ops = _build_setup(cfg)
    report = check_conditions(profiles, grid.domain.lengths)
    _write_json(os.path.join(out_dir, "report.json"), report.as_flat_dict())
    return 0 if report.pass_ else 2


def _task_spectrum(cfg, out_dir, force, threads):
    grid, profiles, ops = _build_setup(cfg)
    probe = s_spectrum_probe(profiles, grid)
    _write_json(os.path.join(out_dir, "spectrum.json"), {
        "points": list(probe.points),
        "sphere_radii": list(probe.sphere_radii),
        "max_imag": probe.max_imag,
    })
    return 0


def _gate_conditions(profiles, grid, force: bool):
    report = check_conditions(profiles, grid.domain.lengths)
    if not report.pass_ and not force:
        raise ConditionsFailed(
            "hypothesis conditions failed; rerun with --force to override")
    return report


def _task_palpha(cfg, out_dir, force, threads):
    grid, profiles, ops = _build_setup(cfg)
    alpha = _require_alpha(cfg)
    spec = _build_quadrature(cfg, alpha)
    solver = _build_solver(cfg)
    report = _gate_conditions(profiles, grid, force)
    v0 = _initial_field(cfg, grid)
    result = apply_P_alpha(spec, ops, QuatField.from_real(v0), solver,
                           report=report, force=force, threads=threads)
    _write_fields_csv(os.path.join(out_dir, "fields.csv"), result.full)
    _write_json(os.path.join(out_dir, "report.json"), report.as_flat_dict())
    return 0


def _task_evolve(cfg, out_dir, force, threads):
    grid, profiles, ops = _build_setup(cfg)
    alpha = _require_alpha(cfg)
    tcfg = cfg.get("time", {})
    if "dt" not in tcfg or "t_end" not in tcfg:
        raise ConfigError("task 'evolve' requires time.dt and time.t_end")
    beta_mode = tcfg.get("beta_mode", False)
    if beta_mode:
        # heat-flux correspondence: dv/dt = 2 div Vec P_beta v, beta = 2a-1
        if not 0.5 < alpha < 1.0:
            raise ConfigError("beta_mode requires alpha in (1/2, 1)")
        build_alpha = 2.0 * alpha - 1.0
    else:
        build_alpha = alpha
    spec = _build_quadrature(cfg, build_alpha)
    solver = _build_solver(cfg)
    report = _gate_conditions(profiles, grid, force)
    fp = build_matrix(spec, ops, solver, report=report, force=force)
    if beta_mode:
        fp = dataclasses.replace(fp, m_vec=tuple(2.0 * m for m in fp.m_vec))
    v0 = _initial_field(cfg, grid)
    ecfg = EvolutionConfig(alpha=alpha, dt=tcfg["dt"], t_end=tcfg["t_end"],
                           scheme=tcfg.get("scheme", "crank-nicolson"),
                           snapshot_every=tcfg.get("snapshot_every", 0))
    trace = evolve(fp, v0, ecfg)
    _write_trace_csv(os.path.join(out_dir, "trace.csv"),
                     trace.times, trace.l2_series)
    for idx, (_, snap) in enumerate(trace.snapshots):
        _write_snapshot_csv(os.path.join(out_dir, f"snap_{idx}.csv"), snap)
    _write_json(os.path.join(out_dir, "report.json"), report.as_flat_dict())
    return 0


def _task_verify(cfg, out_dir, force, threads):
    grid, profiles, ops = _build_setup(cfg)
    alpha = float(cfg.get("alpha", 0.5))
    spec = _build_quadrature(cfg, alpha)
    solver = _build_solver(cfg)
    report = _gate_conditions(profiles, grid, force)
    v0 = QuatField.from_real(_initial_field(cfg, grid))

    checks = {}

    def record(name, value, tol):
        checks[name] = {"value": float(value), "tol": float(tol),
                        "pass": bool(value <= tol)}

    half = QuadratureSpec(alpha=0.5, j=spec.j, t_split=spec.t_split,
                          n_sing=spec.n_sing, n_tail=spec.n_tail)
    acc = sum(nd["weight"] * nd["t"] ** (-0.5) / (1.0 + nd["t"] ** 2)
              for nd in quad_nodes(half))
    record("known_integral", abs(acc - math.pi / math.sqrt(2.0)), 1e-10)

    base = apply_P_alpha(spec, ops, v0, solver, report=report, force=force,
                         threads=threads)
    left = apply_P_alpha(spec, ops, v0, solver, form="left", report=report,
                         force=force, threads=threads)
    denom = max(base.full.l2(), 1e-300)
    record("left_right_gap", (base.full - left.full).l2() / denom, 1e-10)

    worst_j = 0.0
    for other in (J_E2, unit_from_components(1.0, 1.0, 1.0)):
        sp = dataclasses.replace(spec, j=other)
        r = apply_P_alpha(sp, ops, v0, solver, report=report, force=force,
                          threads=threads)
        worst_j = max(worst_j, (r.full - base.full).l2() / denom)
    record("j_independence", worst_j, 1e-10)

    doubled = dataclasses.replace(spec, n_sing=2 * spec.n_sing,
                                  n_tail=2 * spec.n_tail)
    r2 = apply_P_alpha(doubled, ops, v0, solver, report=report, force=force,
                       threads=threads)
    record("quadrature_doubling", (r2.full - base.full).l2() / denom, 1e-8)

    record("j_leak", base.j_leak, 1e-9)

    if ops.is_constant:
        ref = closed_form_P_alpha(alpha, v0.component(0), ops)
        record("closed_form_gap",
               (base.full - ref.full).l2() / max(ref.full.l2(), 1e-300), 1e-6)

    ok = all(c["pass"] for c in checks.values())
    _write_json(os.path.join(out_dir, "verify.json"),
                {"checks": checks, "pass": ok})
    return 0 if ok else 4


_TASKS = {
    "check": _task_check,
    "spectrum": _task_spectrum,
    "palpha": _task_palpha,
    "evolve": _task_evolve,
    "verify": _task_verify,
}


# ---------------------------------------------------------------------------
# Entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sfrac",
        description="Fractional powers of quaternionic gradient operators "
                    "on box domains: hypothesis checks, spectra, P_alpha "
                    "application, and fractional evolution.")
    parser.add_argument("config", help="path to a JSON run configuration")
    parser.add_argument("--force", action="store_true",
                        help="proceed despite failed hypothesis conditions")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for quadrature node solves")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides output.dir)")
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1

    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        jsonschema.validate(cfg, SCHEMA)
    except (OSError, json.JSONDecodeError,
            jsonschema.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out_dir = args.out or cfg.get("output", {}).get("dir", ".")

    try:
        os.makedirs(out_dir, exist_ok=True)
        code = _TASKS[cfg["task"]](cfg, out_dir, args.force, args.threads)
        _write_json(os.path.join(out_dir, "run_meta.json"), {
            "version": __version__,
            "task": cfg["task"],
            "force": args.force,
            "threads": args.threads,
        })
        return code
    except (ConfigError, ExprSyntaxError, EvalError, StabilityError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConditionsFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverDiverged as exc:
        node = getattr(exc, "node_index", None)
        where = f" at node {node}" if node is not None else ""
        print(f"error: solver failed{where}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
