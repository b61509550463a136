import json
import math

import numpy as np

from weaknoise.serialize import dumps, fmt_float, read_csv_columns, write_csv, write_json, write_jsonl


def test_floats_round_trip():
    vals = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, np.float64(math.pi)]
    text = dumps({"v": vals})
    assert json.loads(text)["v"] == [float(v) for v in vals]
    assert "0.10000000000000001" in text


def test_non_finite_json_and_csv():
    assert json.loads(dumps([math.nan, math.inf, -math.inf])) == ["NaN", "Infinity", "-Infinity"]
    assert [fmt_float(v) for v in (math.nan, math.inf, -math.inf)] == ["nan", "inf", "-inf"]


def test_numpy_types():
    doc = json.loads(dumps({"a": np.arange(3), "b": np.bool_(True), "c": np.int64(4), "d": 2 + 1j}))
    assert doc == {"a": [0, 1, 2], "b": True, "c": 4, "d": [2.0, 1.0]}


def test_files_deterministic(tmp_path):
    rows = [(0.1, 2, True), (math.nan, -1, False)]
    a = write_csv(tmp_path / "a.csv", ("x", "n", "flag"), rows).read_bytes()
    b = write_csv(tmp_path / "b.csv", ("x", "n", "flag"), rows).read_bytes()
    assert a == b == b"x,n,flag\n0.10000000000000001,2,1\nnan,-1,0\n"
    cols = read_csv_columns(tmp_path / "a.csv")
    assert cols["n"].tolist() == [2.0, -1.0] and math.isnan(cols["x"][1])
    write_json(tmp_path / "m.json", {"k": 1.5})
    assert (tmp_path / "m.json").read_text() == '{\n  "k": 1.5\n}\n'
    write_jsonl(tmp_path / "r.jsonl", [{"a": 1}, {"a": 0.5}])
    assert (tmp_path / "r.jsonl").read_text().splitlines() == ['{"a": 1}', '{"a": 0.5}']
