"""Tabulated map functions loaded from CSV grids.

Two file layouts are understood:

* curve files: two columns ``x,value`` (battery OCV/resistance against soc,
  torque limits against shaft speed);
* grid files: the first row holds the column grid (shaft speed, rad/s), the
  first column holds the row grid (torque, Nm) and the body holds values.

Lines starting with ``#`` are ignored. Both interpolators clamp at the grid
edges instead of extrapolating.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ParseError


def _rows(path):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    return list(csv.reader(lines))


def _floats(cells, path, lineno):
    try:
        return [float(c) for c in cells]
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric value on data row {lineno}") from exc


class Curve:
    """Piecewise-linear 1-D map with clamped ends."""

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ParseError("curve needs two equal-length columns with at least 2 rows")
        if np.any(np.diff(x) <= 0):
            raise ParseError("curve abscissa must be strictly increasing")
        self.x = x
        self.y = y

    def __call__(self, q):
        out = np.interp(q, self.x, self.y)
        return float(out) if np.ndim(out) == 0 else out

    @classmethod
    def from_csv(cls, path):
        rows = _rows(path)
        data = []
        for i, row in enumerate(rows):
            if i == 0 and not _is_numeric(row[0]):
                continue  # header
            if len(row) != 2:
                raise ParseError(f"{path}: expected 2 columns, got {len(row)}")
            data.append(_floats(row, path, i))
        if not data:
            raise ParseError(f"{path}: no data rows")
        arr = np.array(data)
        return cls(arr[:, 0], arr[:, 1])


class Grid2D:
    """Bilinear interpolation on a rectangular (speed, torque) grid.

    ``values[i, j]`` is the value at ``torque[i]`` and ``speed[j]``. Queries
    outside the grid are clamped onto its boundary.
    """

    def __init__(self, speed, torque, values):
        self.speed = np.asarray(speed, dtype=float)
        self.torque = np.asarray(torque, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.torque.size, self.speed.size):
            raise ParseError("grid body shape does not match its axes")
        for axis in (self.speed, self.torque):
            if axis.size < 2 or np.any(np.diff(axis) <= 0):
                raise ParseError("grid axes must be strictly increasing with >= 2 points")

    @staticmethod
    def _locate(axis, q):
        q = np.clip(q, axis[0], axis[-1])
        i = np.clip(np.searchsorted(axis, q, side="right") - 1, 0, axis.size - 2)
        frac = (q - axis[i]) / (axis[i + 1] - axis[i])
        return i, frac

    def __call__(self, omega, torque):
        j, u = self._locate(self.speed, np.asarray(omega, dtype=float))
        i, w = self._locate(self.torque, np.asarray(torque, dtype=float))
        v = self.values
        out = ((1 - w) * ((1 - u) * v[i, j] + u * v[i, j + 1])
               + w * ((1 - u) * v[i + 1, j] + u * v[i + 1, j + 1]))
        return float(out) if np.ndim(out) == 0 else out

    @classmethod
    def from_csv(cls, path):
        rows = _rows(path)
        if len(rows) < 3:
            raise ParseError(f"{path}: grid needs a header row and >= 2 data rows")
        speed = _floats(rows[0][1:], path, 0)
        torque, body = [], []
        for k, row in enumerate(rows[1:], start=1):
            vals = _floats(row, path, k)
            if len(vals) != len(speed) + 1:
                raise ParseError(f"{path}: row {k} has {len(vals)} cells, expected {len(speed) + 1}")
            torque.append(vals[0])
            body.append(vals[1:])
        return cls(speed, torque, body)


def _is_numeric(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def write_curve(path, x, y, header=("x", "value")):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for a, b in zip(x, y):
            w.writerow([repr(float(a)), repr(float(b))])


def write_grid(path, speed, torque, values):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([""] + [repr(float(s)) for s in speed])
        for t, row in zip(torque, values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
