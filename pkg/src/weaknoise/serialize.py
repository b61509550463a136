"""Deterministic flat-file output.

Floats are written with 17 significant digits so that values round-trip
exactly and repeated runs produce byte-identical files.  Non-finite values are
written as the strings "NaN", "Infinity" and "-Infinity" in JSON and as nan,
inf, -inf in CSV.
"""
from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

_TOKEN = "\x00f17:"
_TOKEN_RE = re.compile(r'"\\u0000f17:([^"]*)"')


def fmt_float(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def _prep(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _prep(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_prep(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_prep(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return _TOKEN + "%.17g" % v
    if isinstance(obj, complex):
        return [_prep(obj.real), _prep(obj.imag)]
    return obj


def dumps(obj: Any, indent: int | None = 2) -> str:
    text = json.dumps(_prep(obj), indent=indent, ensure_ascii=True)
    return _TOKEN_RE.sub(r"\1", text)


def write_json(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.write_text(dumps(obj) + "\n", encoding="utf-8", newline="\n")
    return path


def write_jsonl(path: str | Path, records: Iterable[Any]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(dumps(r, indent=None) + "\n")
    return path


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv_columns(path: str | Path) -> dict[str, np.ndarray]:
    """Numeric CSV with a header row, returned column-wise."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body if r], dtype=float).reshape(-1, len(header))
    return {h.strip(): data[:, k] for k, h in enumerate(header)}
