import json

import numpy as np
import pytest

from msl import OmegaClass, model_spectral_data
from msl import io
from msl.errors import SchemaError
from msl.validator import sine_counterexample_data


def problem_doc():
    return {
        "m": 2,
        "h": [[0.2, [0.1, 0.05]], [[0.1, -0.05], 0.0]],
        "H": [[0.1, 0.0], [0.0, 0.3]],
        "Q": {"kind": "closed_form", "fill": "upper", "terms": [
            {"row": 1, "col": 1, "type": "cos", "amp": 1.0, "freq": 1.0},
            {"row": 1, "col": 2, "type": "sin", "amp": [0.3, 0.1], "freq": 2.0},
            {"row": 2, "col": 2, "type": "poly", "amp": 0.5, "power": 1},
        ]},
    }


def test_problem_roundtrip():
    p = io.problem_from_dict(problem_doc())
    q = io.problem_from_dict(json.loads(io.dumps(io.problem_to_dict(p))))
    xs = np.linspace(0, np.pi, 9)
    assert np.array_equal(p.Q(xs), q.Q(xs))
    assert np.array_equal(p.h, q.h) and np.array_equal(p.H, q.H)
    assert np.allclose(p.Q(xs), np.conj(np.swapaxes(p.Q(xs), 1, 2)))


def test_grid_problem_roundtrip():
    doc = {"m": 1, "h": [[0.0]], "H": [[0.0]],
           "Q": {"kind": "grid", "points": 5, "values": [[[float(v)]] for v in np.cos(np.linspace(0, np.pi, 5))]}}
    p = io.problem_from_dict(doc)
    again = io.problem_from_dict(json.loads(io.dumps(io.problem_to_dict(p))))
    assert np.array_equal(p.Q.values, again.Q.values)


def test_declared_omega_checked():
    doc = problem_doc()
    doc["Q"]["terms"] = [t for t in doc["Q"]["terms"] if t["row"] == t["col"]]
    doc["h"] = [[0.2, 0.0], [0.0, 0.0]]
    doc["omega"] = [0.3, 9.0]
    with pytest.raises(SchemaError) as e:
        io.problem_from_dict(doc)
    assert e.value.path == "$.omega"


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d.pop("m"), "$"),
    (lambda d: d.update(m="two"), "$.m"),
    (lambda d: d["Q"]["terms"][1].update(type="exp"), "$.Q.terms[1].type"),
    (lambda d: d["Q"]["terms"][0].update(row=3), "$.Q.terms[0]"),
    (lambda d: d["Q"].update(kind="spline"), "$.Q.kind"),
    (lambda d: d.update(h=[[0.0]]), "$.h"),
])
def test_problem_schema_errors(mutate, path):
    doc = problem_doc()
    mutate(doc)
    with pytest.raises(SchemaError) as e:
        io.problem_from_dict(doc)
    assert e.value.path.startswith(path)


def test_spectral_roundtrip_bit_exact():
    d = model_spectral_data(OmegaClass([0.0, 0.3]), 5)
    text = io.dumps(io.spectral_data_to_dict(d))
    e = io.spectral_data_from_dict(json.loads(text))
    assert np.array_equal(d.lam, e.lam) and np.array_equal(d.alpha, e.alpha)
    assert io.dumps(io.spectral_data_to_dict(e)) == text


def test_spectral_canonical_order_and_indices():
    doc = io.spectral_data_to_dict(sine_counterexample_data(N=2))
    assert [(e["n"], e["q"]) for e in doc["entries"]] == [(0, 1), (0, 2), (1, 1), (1, 2), (2, 1), (2, 2)]


@pytest.mark.parametrize("mutate, needle", [
    (lambda d: d["entries"].pop(), "missing entry"),
    (lambda d: d["entries"].append(dict(d["entries"][0])), "duplicate"),
    (lambda d: d.update(omega=[0.3, 0.0]), "nondecreasing"),
    (lambda d: d["entries"][0].update(q=3), "outside"),
    (lambda d: d["entries"][1].update(alpha=[[1.0]]), "expected"),
])
def test_spectral_schema_errors(mutate, needle):
    doc = io.spectral_data_to_dict(model_spectral_data(OmegaClass([0.0, 0.3]), 2))
    mutate(doc)
    with pytest.raises(SchemaError) as e:
        io.spectral_data_from_dict(doc)
    assert needle in str(e.value)


def test_malformed_json_reports_position(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text('{"m": 1,\n "h": [[0.0]\n}')
    with pytest.raises(SchemaError) as e:
        io.read_json(f)
    assert "line" in str(e.value) and "column" in str(e.value)


def test_float_format():
    assert io.dumps(0.1) == "0.10000000000000001\n"
    assert io.dumps(2.0) == "2.0\n"
    assert io.dumps(complex(1, -0.0)) == "[1.0, -0.0]\n"
    with pytest.raises(SchemaError):
        io.dumps(float("nan"))


def test_dumps_deterministic():
    obj = {"b": [1.0, 2.5], "a": {"x": np.array([[1.0, 2.0]])}}
    assert io.dumps(obj) == io.dumps(obj)
    assert json.loads(io.dumps(obj)) == {"b": [1.0, 2.5], "a": {"x": [[1.0, 2.0]]}}


def test_csv(tmp_path):
    f = tmp_path / "t.csv"
    io.write_csv(f, ["x", "y"], [np.array([0.0, 0.5]), np.array([1.0, 1 / 3])])
    lines = f.read_text().splitlines()
    assert lines[0] == "x,y"
    assert float(lines[2].split(",")[1]) == 1 / 3
