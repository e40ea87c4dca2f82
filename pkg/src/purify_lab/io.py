"""Matrix files and report serialization.

A matrix file is JSON ``{"dims": [d1, ...], "entries": [[re, im], ...]}`` with
the entries listed in row-major order.  Reports are written atomically.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .tensor import LabeledOperator

CSV_HEADER = ("n", "divergence", "alpha", "per_copy_value", "baseline", "gap", "seed")


class FormatError(ValueError):
    """A matrix or report file does not follow the expected layout."""


def operator_to_json(x: LabeledOperator) -> dict:
    flat = np.asarray(x.entries).ravel()
    return {"dims": list(x.dims), "entries": [[float(z.real), float(z.imag)] for z in flat]}


def operator_from_json(obj: Any) -> LabeledOperator:
    if not isinstance(obj, dict) or "dims" not in obj or "entries" not in obj:
        raise FormatError("matrix object needs 'dims' and 'entries'")
    dims = obj["dims"]
    if not isinstance(dims, list) or not dims or not all(isinstance(d, int) and d >= 1 for d in dims):
        raise FormatError(f"bad dims {dims!r}")
    D = math.prod(dims)
    raw = obj["entries"]
    if not isinstance(raw, list) or len(raw) != D * D:
        raise FormatError(f"expected {D * D} entries for dims {dims}, got {len(raw) if isinstance(raw, list) else raw!r}")
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError("entries must be [re, im] pairs") from exc
    if arr.shape != (D * D, 2):
        raise FormatError("entries must be [re, im] pairs")
    return LabeledOperator((arr[:, 0] + 1j * arr[:, 1]).reshape(D, D), tuple(dims))


def read_matrix(path: str | os.PathLike) -> LabeledOperator:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc.msg})") from exc
    return operator_from_json(obj)


def write_matrix(x: LabeledOperator, path: str | os.PathLike) -> None:
    atomic_write(path, json.dumps(operator_to_json(x)) + "\n")


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the same directory and ``os.replace``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def jsonable(obj: Any) -> Any:
    """Recursively convert numpy scalars and infinities ("inf" / "-inf") for JSON output."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def from_jsonable(obj: Any) -> Any:
    """Inverse of ``jsonable`` for the infinity strings."""
    if isinstance(obj, dict):
        return {k: from_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [from_jsonable(v) for v in obj]
    if obj in ("inf", "-inf", "nan"):
        return float(obj)
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(jsonable(report), sort_keys=True, indent=2) + "\n"


def emit_json(report: dict, path: str | os.PathLike) -> None:
    atomic_write(path, dumps_report(report))


def load_json(path: str | os.PathLike) -> dict:
    return from_jsonable(json.loads(Path(path).read_text()))


def format_number(x: float | None) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".12g")


def csv_text(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([
            int(r["n"]),
            r["divergence"],
            format_number(r["alpha"]) if r.get("alpha") is not None else "",
            format_number(r["per_copy_value"]),
            format_number(r["baseline"]),
            format_number(r["gap"]),
            int(r["seed"]),
        ])
    return buf.getvalue()


def emit_csv(rows: Iterable[dict], path: str | os.PathLike) -> None:
    atomic_write(path, csv_text(rows))
