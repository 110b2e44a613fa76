"""CSV and JSON writers. Floats are written with ``repr`` so reruns are byte-identical."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path: Path, columns: list[str], rows: list[dict], comments: list[str] = ()) -> None:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_json(path: Path, payload) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_sample_csv(path: Path, sample, spec: str) -> None:
    """Single-column CSV of sample values, metadata in a header comment."""
    comments = [f"spec={spec}", f"route={sample.route}", f"seed={sample.seed}",
                f"scaling={sample.scaling}", f"n={sample.n}"]
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    buf.write("value\n")
    buf.write("\n".join(repr(float(v)) for v in sample.values))
    buf.write("\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_sample_csv(path: Path) -> tuple[dict, np.ndarray]:
    meta, values = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        elif line and line != "value":
            values.append(float(line))
    return meta, np.array(values)


def write_pairs_csv(path: Path, pair) -> None:
    buf = io.StringIO()
    buf.write(f"# seed={pair.seed}\n# p={pair.p!r}\n# scale={pair.scale!r}\n")
    buf.write("w,w_e\n")
    for a, b in zip(pair.w, pair.w_e):
        buf.write(f"{float(a)!r},{float(b)!r}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
