"""Command-line entry point: forward, inverse, validate and roundtrip.

Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4 schema error.
Set MSL_LOG (DEBUG, INFO, WARNING) to control verbosity.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import io
from .errors import MSLError, SchemaError, ValidationError
from .forward import asymptotics_report, assemble_spectral_data, normalize_to_A_omega
from .inverse import reconstruct
from .operator_core import Grid, set_threads
from .validator import INCONCLUSIVE, validate

log = logging.getLogger("msl")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_SCHEMA = 0, 2, 3, 4


def _emit(obj, path):
    text = io.dumps(obj)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def _normalized(problem):
    if problem.omega is not None:
        return problem, None
    p, U = normalize_to_A_omega(problem.Q, problem.h, problem.H)
    log.info("conjugated the problem to diagonal omega %s", p.omega.omega_values)
    return p, U


def _forward(problem, N, grid_points):
    problem, U = _normalized(problem)
    data = assemble_spectral_data(problem, N, Grid(grid_points))
    return problem, U, data


def _asymptotics_dict(data):
    rep = asymptotics_report(data)
    return {
        "slope_lambda": rep.slope_lambda,
        "slope_alpha": rep.slope_alpha,
        "growth_flag": rep.growth_flag,
        "max_kappa_lambda": float(np.max(np.abs(rep.kappa_nq), initial=0.0)),
        "max_kappa_alpha": float(np.max(np.abs(rep.kappa_ns), initial=0.0)),
        "partial_l2_lambda": rep.partial_l2_lambda,
        "partial_l2_alpha": rep.partial_l2_alpha,
    }


def cmd_forward(args) -> int:
    problem = io.read_problem(args.problem)
    problem, U, data = _forward(problem, args.N, args.grid_points)
    extra = {"asymptotics": _asymptotics_dict(data),
             "diagnostics": {"notes": list(data.diagnostics.get("notes", [])),
                             "grid_points": args.grid_points}}
    if U is not None:
        extra["unitary"] = io.matrix_pairs(U)
    _emit(io.spectral_data_to_dict(data, extra), args.output)
    return EXIT_OK


def _report_warnings(report):
    if report.condition1.status == INCONCLUSIVE:
        log.warning("condition 1 inconclusive: %s", report.condition1.message)
    for name in ("condition1", "condition2", "condition3"):
        c = getattr(report, name)
        if c.status == "fail":
            log.warning("%s failed: %s", name, c.message)


def _load_config(path):
    if path is None:
        return {}
    cfg = io.read_json(path)
    if not isinstance(cfg, dict):
        raise SchemaError("config must be an object", "$")
    allowed = {"N_trunc", "x_points", "derivative"}
    for k in cfg:
        if k not in allowed:
            raise SchemaError(f"unknown config key {k!r}", f"$.{k}")
    return cfg


def cmd_inverse(args) -> int:
    data = io.read_spectral_data(args.data)
    cfg = _load_config(args.config)
    N_trunc = args.N_trunc if args.N_trunc is not None else cfg.get("N_trunc", data.N_max)
    x_points = args.x_points if args.x_points is not None else cfg.get("x_points", 1024)
    derivative = args.derivative or cfg.get("derivative", "analytic")
    report = validate(data)
    _report_warnings(report)
    if not report.accepted and not args.skip_validation:
        log.error("data rejected by the validator; use --skip-validation to reconstruct anyway")
        return EXIT_VALIDATION
    res = reconstruct(data, N_trunc=int(N_trunc), x_grid=int(x_points), derivative=derivative, threads=args.threads)
    _emit(io.reconstruction_to_problem_dict(res), args.output)
    diag = io.reconstruction_diagnostics(res)
    diag["validation"] = report.to_dict()
    if args.diagnostics:
        io.write_json(diag, args.diagnostics)
    if args.csv:
        header, cols = ["x"], [res.x]
        for i, j in _entries(res.Q.shape[1]):
            header += _complex_headers(f"Q_{i + 1}{j + 1}", res.Q[:, i, j])
            cols += _complex_columns(res.Q[:, i, j])
            header += _complex_headers(f"eps0_{i + 1}{j + 1}", res.eps0[:, i, j])
            cols += _complex_columns(res.eps0[:, i, j])
        io.write_csv(args.csv, header, cols)
    return EXIT_OK


def cmd_validate(args) -> int:
    data = io.read_spectral_data(args.data)
    report = validate(data)
    _report_warnings(report)
    _emit(report.to_dict(), args.output)
    return EXIT_OK if report.accepted else EXIT_VALIDATION


def _entries(m):
    return [(i, j) for i in range(m) for j in range(i, m)]


def _is_complex(v):
    return np.iscomplexobj(v) and bool(np.any(np.imag(v)))


def _complex_headers(name, v):
    return [name + "_re", name + "_im"] if _is_complex(v) else [name]


def _complex_columns(v):
    return [v.real, v.imag] if _is_complex(v) else [np.real(v)]


def roundtrip_metrics(problem, res):
    x = res.x
    Qt = problem.Q(x)
    err = np.linalg.norm((res.Q - Qt).reshape(x.size, -1), axis=1)
    l2 = float(np.sqrt(np.trapezoid(err ** 2, x)))
    return {
        "N_trunc": int(res.N_trunc),
        "Q_L2": l2,
        "Q_sup": float(err.max()),
        "h_max": float(np.max(np.abs(res.h - problem.h))),
        "H_max": float(np.max(np.abs(res.H - problem.H))),
        "h_error": io.matrix_pairs(res.h - problem.h),
        "H_error": io.matrix_pairs(res.H - problem.H),
    }


def cmd_roundtrip(args) -> int:
    problem = io.read_problem(args.problem)
    problem, U, data = _forward(problem, args.N, args.grid_points)
    N_trunc = args.N_trunc if args.N_trunc is not None else args.N
    levels = sorted({max(1, N_trunc // 4), max(1, N_trunc // 2), N_trunc})
    table = []
    res = None
    for Nt in levels:
        res = reconstruct(data, N_trunc=Nt, x_grid=args.x_points, derivative=args.derivative or "analytic",
                          threads=args.threads)
        table.append(roundtrip_metrics(problem, res))
    out = dict(table[-1])
    out["convergence"] = [{k: t[k] for k in ("N_trunc", "Q_L2", "Q_sup", "h_max", "H_max")} for t in table]
    out["N"] = args.N
    if U is not None:
        out["unitary"] = io.matrix_pairs(U)
    _emit(out, args.output)
    if args.csv:
        Qt = problem.Q(res.x)
        header, cols = ["x"], [res.x]
        for i, j in _entries(problem.m):
            tag = f"{i + 1}{j + 1}"
            for name, v in (("Q_true", Qt[:, i, j]), ("Q_rec", res.Q[:, i, j]), ("eps0", res.eps0[:, i, j])):
                header += _complex_headers(f"{name}_{tag}", v)
                cols += _complex_columns(v)
        io.write_csv(args.csv, header, cols)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msl", description="Forward and inverse spectral problems for matrix "
                                "Sturm-Liouville operators on [0, pi].")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--output", "-o", default=None, help="output file (default: stdout)")
        sp.add_argument("--threads", type=int, default=1, help="cap on the parallel map width")

    f = sub.add_parser("forward", help="spectral data of a problem")
    f.add_argument("problem")
    f.add_argument("--N", type=int, required=True, help="truncation order")
    f.add_argument("--grid-points", type=int, default=2048)
    common(f)
    f.set_defaults(func=cmd_forward)

    i = sub.add_parser("inverse", help="reconstruct a problem from spectral data")
    i.add_argument("data")
    i.add_argument("--config", default=None, help="JSON with N_trunc, x_points, derivative")
    i.add_argument("--N-trunc", type=int, default=None)
    i.add_argument("--x-points", type=int, default=None)
    i.add_argument("--derivative", choices=["analytic", "fd"], default=None)
    i.add_argument("--skip-validation", action="store_true")
    i.add_argument("--diagnostics", default=None, help="write diagnostics JSON here")
    i.add_argument("--csv", default=None, help="write x, Q and eps0 columns here")
    common(i)
    i.set_defaults(func=cmd_inverse)

    v = sub.add_parser("validate", help="check the characterization conditions")
    v.add_argument("data")
    common(v)
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("roundtrip", help="forward then inverse, with error metrics")
    r.add_argument("problem")
    r.add_argument("--N", type=int, required=True)
    r.add_argument("--N-trunc", type=int, default=None)
    r.add_argument("--x-points", type=int, default=1024)
    r.add_argument("--grid-points", type=int, default=2048)
    r.add_argument("--derivative", choices=["analytic", "fd"], default=None)
    r.add_argument("--csv", default=None, help="write x, Q_true, Q_rec, eps0 columns here")
    common(r)
    r.set_defaults(func=cmd_roundtrip)
    return p


def main(argv=None) -> int:
    level = getattr(logging, os.environ.get("MSL_LOG", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.threads and args.threads > 1:
        set_threads(args.threads)
    try:
        return args.func(args)
    except SchemaError as e:
        log.error("schema error: %s", e)
        return EXIT_SCHEMA
    except FileNotFoundError as e:
        log.error("%s", e)
        return EXIT_SCHEMA
    except ValidationError as e:
        log.error("validation error: %s", e)
        return EXIT_VALIDATION
    except MSLError as e:
        log.error("numerical failure: %s", e)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
