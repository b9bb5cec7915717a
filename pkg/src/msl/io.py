"""JSON layouts for problems, spectral data and reconstruction results.

Complex numbers are written as [re, im]; readers also accept plain reals.
Matrix and index conventions in files are 1-based (q, row, col). Floats are
written with 17 significant digits so that files round-trip bit-exactly.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .operator_core import OmegaClass, Problem
from .potentials import ClosedFormPotential, GridPotential, Term
from .spectral_data import SpectralData

# serialization


def _fmt_float(v: float, path: str) -> str:
    if not math.isfinite(v):
        raise SchemaError(f"non-finite value {v!r} cannot be written", path)
    s = format(v, ".17g")
    if s in ("-0", "0"):
        return "0.0" if s == "0" else "-0.0"
    if "e" not in s and "." not in s and "inf" not in s:
        s += ".0"
    return s


def _emit(obj, path: str, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj), path)
    if isinstance(obj, (complex, np.complexfloating)):
        return "[" + _fmt_float(obj.real, path) + ", " + _fmt_float(obj.imag, path) + "]"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _emit(obj.tolist(), path, indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(v, f'{path}.{k}', indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        parts = [_emit(v, f"{path}[{i}]", indent, level + 1) for i, v in enumerate(obj)]
        flat = all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj)
        if flat or sum(len(p) for p in parts) < 100:
            return "[" + ", ".join(parts) + "]"
        return "[\n" + ",\n".join(pad + p for p in parts) + "\n" + end + "]"
    raise SchemaError(f"cannot serialize {type(obj).__name__}", path)


def dumps(obj, indent: int = 1) -> str:
    """Deterministic JSON text with 17-significant-digit floats."""
    return _emit(obj, "$", indent, 0) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed JSON: {e.msg} (line {e.lineno}, column {e.colno})", "$") from None


def complex_pair(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def matrix_pairs(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[complex_pair(v) for v in row] for row in a]


# parsing helpers


def _require(doc, key, path):
    if not isinstance(doc, dict):
        raise SchemaError("expected an object", path)
    if key not in doc:
        raise SchemaError(f"missing key {key!r}", path)
    return doc[key]


def _int(v, path, minimum=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"expected an integer, got {v!r}", path)
    if minimum is not None and v < minimum:
        raise SchemaError(f"expected an integer >= {minimum}, got {v}", path)
    return v


def _real(v, path) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"expected a number, got {v!r}", path)
    return float(v)


def _complex(v, path) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise SchemaError("complex numbers are [re, im]", path)
        return complex(_real(v[0], path + "[0]"), _real(v[1], path + "[1]"))
    return complex(_real(v, path))


def _matrix(v, m, path) -> np.ndarray:
    if not isinstance(v, list) or len(v) != m:
        raise SchemaError(f"expected {m} rows", path)
    out = np.zeros((m, m), dtype=complex)
    for i, row in enumerate(v):
        if not isinstance(row, list) or len(row) != m:
            raise SchemaError(f"expected {m} entries", f"{path}[{i}]")
        for j, e in enumerate(row):
            out[i, j] = _complex(e, f"{path}[{i}][{j}]")
    return out


def _maybe_real(a):
    return a.real if not np.any(np.imag(a)) else a


# problems


def _parse_potential(doc, m, path):
    kind = _require(doc, "kind", path)
    if kind == "closed_form":
        terms = _require(doc, "terms", path)
        if not isinstance(terms, list):
            raise SchemaError("terms must be a list", path + ".terms")
        out = []
        for i, t in enumerate(terms):
            p = f"{path}.terms[{i}]"
            r = _int(_require(t, "row", p), p + ".row", 1) - 1
            c = _int(_require(t, "col", p), p + ".col", 1) - 1
            if r >= m or c >= m:
                raise SchemaError(f"entry ({r + 1}, {c + 1}) outside an {m}x{m} matrix", p)
            tk = _require(t, "type", p)
            if tk not in ("poly", "cos", "sin"):
                raise SchemaError(f"unknown term type {tk!r}", p + ".type")
            amp = _complex(_require(t, "amp", p), p + ".amp")
            freq = _real(t.get("freq", 0.0), p + ".freq")
            power = _int(t.get("power", 0), p + ".power", 0)
            out.append((r, c, Term(tk, amp, freq, power)))
        if doc.get("fill", "full") == "upper":
            return ClosedFormPotential.from_upper(m, out)
        return ClosedFormPotential(m, out)
    if kind == "grid":
        points = _int(_require(doc, "points", path), path + ".points", 4)
        vals = _require(doc, "values", path)
        if not isinstance(vals, list) or len(vals) != points:
            raise SchemaError(f"expected {points} samples", path + ".values")
        arr = np.stack([_matrix(v, m, f"{path}.values[{i}]") for i, v in enumerate(vals)])
        return GridPotential(_maybe_real(arr))
    raise SchemaError(f"unknown potential kind {kind!r}", path + ".kind")


def problem_from_dict(doc) -> Problem:
    m = _int(_require(doc, "m", "$"), "$.m", 1)
    h = _matrix(_require(doc, "h", "$"), m, "$.h")
    H = _matrix(_require(doc, "H", "$"), m, "$.H")
    Q = _parse_potential(_require(doc, "Q", "$"), m, "$.Q")
    problem = Problem(Q, _maybe_real(h), _maybe_real(H))
    if "omega" in doc and doc["omega"] is not None:
        om = doc["omega"]
        if not isinstance(om, list) or len(om) != m:
            raise SchemaError(f"expected {m} values", "$.omega")
        given = np.array([_real(v, f"$.omega[{i}]") for i, v in enumerate(om)])
        actual = np.real(np.diag(problem.omega_matrix))
        if problem.omega is not None and np.max(np.abs(given - actual)) > 1e-8 * max(1.0, np.max(np.abs(actual))):
            raise SchemaError(f"declared omega {given.tolist()} differs from h + H + (1/2) int Q = "
                              f"{actual.tolist()}", "$.omega")
    return problem


def _potential_to_dict(Q, points):
    if isinstance(Q, ClosedFormPotential):
        terms = []
        for r, c, t in Q.terms:
            terms.append({"row": r + 1, "col": c + 1, "type": t.kind, "amp": complex_pair(t.amp),
                          "freq": float(t.freq), "power": int(t.power)})
        return {"kind": "closed_form", "terms": terms}
    if isinstance(Q, GridPotential):
        vals = Q.values
    else:
        vals = Q.grid_values(points)
    return {"kind": "grid", "points": int(vals.shape[0]), "values": [matrix_pairs(v) for v in vals]}


def problem_to_dict(problem: Problem, points: int = 1024) -> dict:
    omega = None if problem.omega is None else problem.omega.omega_values
    return {
        "m": problem.m,
        "h": matrix_pairs(problem.h),
        "H": matrix_pairs(problem.H),
        "Q": _potential_to_dict(problem.Q, points),
        "omega": None if omega is None else [float(v) for v in omega],
    }


def read_problem(path) -> Problem:
    return problem_from_dict(read_json(path))


# spectral data


def spectral_data_from_dict(doc) -> SpectralData:
    m = _int(_require(doc, "m", "$"), "$.m", 1)
    om = _require(doc, "omega", "$")
    if not isinstance(om, list) or len(om) != m:
        raise SchemaError(f"expected {m} values", "$.omega")
    w = np.array([_real(v, f"$.omega[{i}]") for i, v in enumerate(om)])
    if np.any(np.diff(w) < 0):
        raise SchemaError("omega must be nondecreasing", "$.omega")
    N = _int(_require(doc, "N_max", "$"), "$.N_max", 0)
    entries = _require(doc, "entries", "$")
    if not isinstance(entries, list):
        raise SchemaError("entries must be a list", "$.entries")
    lam = np.full((N + 1, m), np.nan, dtype=complex)
    alpha = np.zeros((N + 1, m, m, m), dtype=complex)
    for i, e in enumerate(entries):
        p = f"$.entries[{i}]"
        n = _int(_require(e, "n", p), p + ".n", 0)
        q = _int(_require(e, "q", p), p + ".q", 1)
        if n > N or q > m:
            raise SchemaError(f"index (n={n}, q={q}) outside N_max={N}, m={m}", p)
        if not np.isnan(lam[n, q - 1].real):
            raise SchemaError(f"duplicate entry (n={n}, q={q})", p)
        lam[n, q - 1] = _complex(_require(e, "lambda", p), p + ".lambda")
        alpha[n, q - 1] = _matrix(_require(e, "alpha", p), m, p + ".alpha")
    missing = np.argwhere(np.isnan(lam.real))
    if missing.size:
        n, q = missing[0]
        raise SchemaError(f"missing entry (n={n}, q={q + 1})", "$.entries")
    return SpectralData(OmegaClass(w), _maybe_real(lam), alpha)


def spectral_data_to_dict(data: SpectralData, extra: dict | None = None) -> dict:
    entries = []
    for n in range(data.N_max + 1):
        for q in range(data.m):
            lam = data.lam[n, q]
            entries.append({
                "n": n,
                "q": q + 1,
                "lambda": complex_pair(lam) if np.iscomplexobj(data.lam) else float(lam),
                "alpha": matrix_pairs(data.alpha[n, q]),
            })
    out = {
        "m": data.m,
        "omega": [float(v) for v in data.omega.omega_values],
        "N_max": data.N_max,
        "entries": entries,
    }
    if extra:
        out.update(extra)
    return out


def read_spectral_data(path) -> SpectralData:
    return spectral_data_from_dict(read_json(path))


# reconstruction output


def reconstruction_to_problem_dict(result) -> dict:
    return {
        "m": int(result.Q.shape[1]),
        "h": matrix_pairs(result.h),
        "H": matrix_pairs(result.H),
        "Q": {"kind": "grid", "points": int(result.x.size), "values": [matrix_pairs(v) for v in result.Q]},
        "omega": [float(v) for v in result.omega.omega_values],
    }


def reconstruction_diagnostics(result) -> dict:
    return {
        "N_trunc": int(result.N_trunc),
        "x_points": int(result.x.size),
        "derivative": result.derivative,
        "xi": [float(v) for v in result.xi.xi],
        "Omega": float(result.xi.Omega),
        "max_residual": float(np.max(result.residuals)),
        "max_condition": float(np.max(result.conditions)),
        "hermitian_defect": float(np.max(result.hermitian_defect)),
        "residuals": [float(v) for v in result.residuals],
        "conditions": [float(v) for v in result.conditions],
        "notes": list(result.notes),
    }


def write_csv(path, header, columns) -> None:
    """Comma-separated table with a header row and 17-digit floats."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(format(float(v), ".17g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
