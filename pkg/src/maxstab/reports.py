"""Stable JSON and CSV emission for fit results, test reports and tables."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from pathlib import Path

import numpy as np

from ._errors import DataError

SCHEMA = "maxstab/1"


class Table:
    """Named, equal-length columns; written as CSV."""

    def __init__(self, columns: dict | None = None, **kw):
        cols = dict(columns or {}, **kw)
        lengths = {len(np.atleast_1d(v)) for v in cols.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths {sorted(lengths)}")
        self.columns = {k: np.atleast_1d(np.asarray(v)) for k, v in cols.items()}

    def __len__(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def __getitem__(self, name):
        return self.columns[name]

    @property
    def names(self):
        return list(self.columns)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.names)
        for i in range(len(self)):
            w.writerow([_cell(self.columns[k][i]) for k in self.names])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> Table:
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        cols = {}
        for j, name in enumerate(header):
            raw = [r[j] for r in body]
            try:
                cols[name] = np.array([float(x) for x in raw])
            except ValueError:
                cols[name] = np.array(raw)
        return cls(cols) if body else cls({k: np.array([]) for k in header})


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def to_jsonable(obj):
    """Convert dataclasses, numpy values and non-finite floats to plain JSON."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_jsonable(obj.to_dict())
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj, kind: str | None = None) -> str:
    payload = to_jsonable(obj)
    if isinstance(payload, dict):
        payload = {"schema": SCHEMA, **({"kind": kind} if kind else {}), **payload}
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(obj, path, kind: str | None = None) -> None:
    """Write ``obj`` as JSON (structured results) or CSV (:class:`Table`)."""
    path = Path(path)
    text = obj.to_csv() if isinstance(obj, Table) else dumps(obj, kind)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write report to {path}: {exc}") from exc


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
