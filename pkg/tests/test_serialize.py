import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vanishpot.serialize import dumps, format_float, sha256_file, write_csv, write_json


def test_format_float_round_trips_and_marks_floats():
    assert format_float(1.0) == "1.0"
    assert format_float(0.0) == "0.0"
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(1e-20) == "9.9999999999999995e-21"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_float_exact(x):
    assert float(format_float(x)) == x


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), -float("inf")])
def test_non_finite_rejected(bad):
    with pytest.raises(ValueError):
        format_float(bad)


def test_dumps_types():
    doc = {"a": np.float64(0.5), "b": np.arange(3), "c": Fraction(1, 3), "d": [True, None], "e": {}, "f": []}
    text = dumps(doc)
    assert json.loads(text) == {"a": 0.5, "b": [0, 1, 2], "c": "1/3", "d": [True, None], "e": {}, "f": []}
    assert text.endswith("}\n")
    assert '"b": [0, 1, 2]' in text


def test_dumps_deterministic_and_ordered():
    doc = {"z": [1.5, 2.5], "a": {"y": 1, "x": 2}}
    assert dumps(doc) == dumps(dict(doc))
    assert list(json.loads(dumps(doc))) == ["z", "a"]


def test_dumps_uses_to_json():
    class Thing:
        def to_json(self):
            return {"k": 1.25}

    assert json.loads(dumps([Thing()])) == [{"k": 1.25}]
    with pytest.raises(TypeError):
        dumps(object())


def test_writers(tmp_path):
    p = write_json(tmp_path / "a.json", {"x": 1.0})
    q = write_json(tmp_path / "b.json", {"x": 1.0})
    assert sha256_file(p) == sha256_file(q)
    c = write_csv(tmp_path / "c.csv", ["y1", "I"], [[1, 0.5], [2, 0.25]])
    assert c.read_text() == "y1,I\n1.0,0.5\n2.0,0.25\n"
