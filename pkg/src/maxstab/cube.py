"""Gridded space-time observations and their long-format CSV representation.

File layout::

    # margin=frechet
    s1,s2,t,value
    1,1,1,0.84...

Coordinates are 1-based.  Any row order is accepted on input; output is
written with time varying fastest.  Floats are written with ``repr`` so a
write/read round trip is exact.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._errors import DataError

MARGINS = ("raw", "gumbel", "frechet")


@dataclass(frozen=True, eq=False)
class ObsCube:
    """Values on ``{1..M}^d x {1..T}``, array shape ``(M,)*d + (T,)``."""

    values: np.ndarray
    margin: str = "raw"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim < 2:
            raise DataError("a cube needs at least one spatial and one time axis")
        if len(set(v.shape[:-1])) != 1:
            raise DataError(f"spatial grid must be square (M^d), got shape {v.shape[:-1]}")
        if self.margin not in MARGINS:
            raise DataError(f"unknown margin {self.margin!r}; expected one of {MARGINS}")
        if not np.all(np.isfinite(v)):
            raise DataError("cube values must be finite")
        if self.margin == "frechet" and np.any(v <= 0):
            raise DataError("frechet-margin cube values must be strictly positive")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.ndim - 1

    @property
    def t_len(self) -> int:
        return self.values.shape[-1]

    def series(self, loc) -> np.ndarray:
        """Time series at 0-based spatial index ``loc``."""
        return self.values[tuple(loc)]

    def locations(self):
        """All 0-based spatial indices in lexicographic order."""
        return itertools.product(range(self.m), repeat=self.d)

    def with_values(self, values, margin: str) -> ObsCube:
        return ObsCube(values, margin)

    def sub(self, slices) -> ObsCube:
        return ObsCube(self.values[tuple(slices)], self.margin)

    def __eq__(self, other):
        if not isinstance(other, ObsCube):
            return NotImplemented
        return self.margin == other.margin and np.array_equal(self.values, other.values)


def _format(x: float) -> str:
    return repr(float(x))


def cube_to_csv(cube: ObsCube) -> str:
    buf = io.StringIO()
    buf.write(f"# margin={cube.margin}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"s{j + 1}" for j in range(cube.d)] + ["t", "value"])
    for idx in np.ndindex(cube.values.shape):
        w.writerow([i + 1 for i in idx] + [_format(cube.values[idx])])
    return buf.getvalue()


def write_cube(cube: ObsCube, path) -> None:
    path = Path(path)
    try:
        path.write_text(cube_to_csv(cube), encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write cube to {path}: {exc}") from exc


def parse_cube(text: str, source: str = "<string>") -> ObsCube:
    """Parse the long CSV format; see the module docstring."""
    margin = None
    header = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if body.startswith("margin="):
                margin = body.split("=", 1)[1].strip()
                if margin not in MARGINS:
                    raise DataError(f"{source}:{lineno}: unknown margin {margin!r}")
            continue
        fields = [f.strip() for f in stripped.split(",")]
        if header is None:
            header = fields
            d = len(header) - 2
            expected = [f"s{j + 1}" for j in range(d)] + ["t", "value"]
            if d < 1 or header != expected:
                raise DataError(
                    f"{source}:{lineno}: header must be {','.join(expected)!s}, got {stripped!r}"
                )
            continue
        if len(fields) != len(header):
            raise DataError(f"{source}:{lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            idx = tuple(int(f) for f in fields[:-1])
            value = float(fields[-1])
        except ValueError as exc:
            raise DataError(f"{source}:{lineno}: cannot parse row {stripped!r}") from exc
        if min(idx) < 1:
            raise DataError(f"{source}:{lineno}: coordinates are 1-based")
        if not np.isfinite(value):
            raise DataError(f"{source}:{lineno}: non-finite value")
        rows.append((lineno, idx, value))
    if header is None:
        raise DataError(f"{source}: missing header line")
    if margin is None:
        raise DataError(f"{source}: missing '# margin=raw|gumbel|frechet' line")
    if not rows:
        raise DataError(f"{source}: no data rows")
    d = len(header) - 2
    m = max(max(idx[:d]) for _, idx, _ in rows)
    t_len = max(idx[d] for _, idx, _ in rows)
    values = np.full((m,) * d + (t_len,), np.nan)
    for lineno, idx, value in rows:
        cell = tuple(i - 1 for i in idx)
        if not np.isnan(values[cell]):
            raise DataError(f"{source}:{lineno}: duplicate cell {idx}")
        values[cell] = value
    missing = np.argwhere(np.isnan(values))
    if missing.size:
        shown = ", ".join(str(tuple(int(i) + 1 for i in cell)) for cell in missing[:10])
        raise DataError(
            f"{source}: incomplete lattice, {len(missing)} missing cell(s): {shown}"
        )
    return ObsCube(values, margin)


def read_cube(path) -> ObsCube:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read cube from {path}: {exc}") from exc
    return parse_cube(text, str(path))
