"""Shared domain types and file I/O.

Grids are flattened row-major: the row index varies slowest, so cell
``(r, c)`` lives at flat index ``r * n_cols + c``.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

REAL_FMT = "%.17g"


class ValidationError(ValueError):
    """Raised when input data or configuration violates a documented contract."""


def fmt_real(x: float) -> str:
    return REAL_FMT % float(x)


@dataclass(frozen=True)
class GridSpec:
    n_rows: int
    n_cols: int
    origin: tuple[float, float] = (0.0, 0.0)
    cell_size: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if int(self.n_rows) < 1 or int(self.n_cols) < 1:
            raise ValidationError("grid needs n_rows >= 1 and n_cols >= 1")
        if min(self.cell_size) <= 0:
            raise ValidationError("cell sizes must be strictly positive")
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "cell_size", tuple(float(v) for v in self.cell_size))

    @property
    def n(self) -> int:
        return self.n_rows * self.n_cols

    def coordinates(self) -> np.ndarray:
        """Return an (n, 2) array of cell-centre coordinates in flat order.

        Column 0 is the x coordinate (varies along a row), column 1 is y.
        """
        x = self.origin[0] + self.cell_size[0] * np.arange(self.n_cols)
        y = self.origin[1] + self.cell_size[1] * np.arange(self.n_rows)
        yy, xx = np.meshgrid(y, x, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    @classmethod
    def covering(cls, x_range, y_range, n_cols, n_rows):
        """Regular lattice whose outermost cell centres sit on the box edges."""
        dx = (x_range[1] - x_range[0]) / (n_cols - 1)
        dy = (y_range[1] - y_range[0]) / (n_rows - 1)
        return cls(n_rows, n_cols, (x_range[0], y_range[0]), (dx, dy))

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "origin": list(self.origin),
            "cell_size": list(self.cell_size),
            "flatten": "row-major",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(d["n_rows"], d["n_cols"], tuple(d["origin"]), tuple(d["cell_size"]))


def _as_binary(values, name="values") -> np.ndarray:
    arr = np.asarray(values)
    bad = np.argwhere((arr != 0) & (arr != 1))
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        loc = idx[0] if len(idx) == 1 else idx
        raise ValidationError(f"non-binary entry at {loc} in {name}")
    out = arr.astype(np.int8)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class BinaryField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = _as_binary(np.ravel(self.values), "binary field")
        if vals.shape[0] != self.grid.n:
            raise ValidationError(
                f"field has {vals.shape[0]} cells but grid has {self.grid.n}")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class DesignMatrix:
    points: np.ndarray
    names: tuple[str, ...] = ()
    ranges: tuple[tuple[float, float], ...] = ()
    log_scaled: tuple[bool, ...] = ()

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        if pts.ndim != 2:
            raise ValidationError("design points must be a 2-D array")
        p, d = pts.shape
        if d < 1:
            raise ValidationError("d >= 1 required")
        if p < 2:
            raise ValidationError("p >= 2 required")
        if not np.all(np.isfinite(pts)) or pts.min() < 0 or pts.max() > 1:
            i, j = np.argwhere(~((pts >= 0) & (pts <= 1)))[0]
            raise ValidationError(
                f"design value {pts[i, j]!r} at ({i},{j}) outside [0,1]")
        names = tuple(self.names) or tuple(f"theta_{k + 1}" for k in range(d))
        ranges = tuple(tuple(float(v) for v in r) for r in self.ranges) or ((0.0, 1.0),) * d
        log_scaled = tuple(bool(v) for v in self.log_scaled) or (False,) * d
        if not (len(names) == len(ranges) == len(log_scaled) == d):
            raise ValidationError("names, ranges and log_scaled must all have length d")
        if len(set(names)) != d:
            raise ValidationError("duplicate parameter name")
        for (lo, hi), lg in zip(ranges, log_scaled):
            if not lo < hi:
                raise ValidationError(f"range ({lo}, {hi}) needs low < high")
            if lg and lo <= 0:
                raise ValidationError("log-scaled ranges must be positive")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "log_scaled", log_scaled)

    @property
    def p(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def subset(self, rows) -> "DesignMatrix":
        return DesignMatrix(self.points[rows], self.names, self.ranges, self.log_scaled)


@dataclass(frozen=True)
class EnsembleMatrix:
    design: DesignMatrix
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = _as_binary(np.array(self.values, ndmin=2), "ensemble")
        if vals.shape[0] != self.design.p:
            raise ValidationError(
                f"ensemble has {vals.shape[0]} rows but design has {self.design.p}")
        if vals.shape[1] != self.grid.n:
            raise ValidationError(
                f"ensemble has {vals.shape[1]} columns but grid has {self.grid.n}")
        object.__setattr__(self, "values", vals)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def subset(self, rows) -> "EnsembleMatrix":
        return EnsembleMatrix(self.design.subset(rows), self.grid, self.values[rows])


def to_native(design: DesignMatrix, point) -> np.ndarray:
    """Map a unit-cube point to native parameter units.

    Log-scaled coordinates are interpolated linearly in log10 space.
    """
    x = np.asarray(point, dtype=float)
    if x.shape != (design.d,):
        raise ValidationError(f"point has length {x.size}, design has d={design.d}")
    out = np.empty(design.d)
    for k, ((lo, hi), lg) in enumerate(zip(design.ranges, design.log_scaled)):
        if x[k] == 0:
            out[k] = lo
        elif x[k] == 1:
            out[k] = hi
        elif lg:
            a, b = np.log10(lo), np.log10(hi)
            out[k] = 10.0 ** (a + x[k] * (b - a))
        else:
            out[k] = lo + x[k] * (hi - lo)
    return out


# ---------------------------------------------------------------- file I/O

def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValidationError(f"{path} is empty")
    return rows[0], rows[1:]


def _write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _sibling(path, suffix) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix)


def cell_header(n: int) -> list[str]:
    return [f"cell_{j}" for j in range(n)]


def save_grid(grid: GridSpec, path) -> None:
    Path(path).write_text(json.dumps(grid.to_dict(), indent=2))


def load_grid(path) -> GridSpec:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return GridSpec.from_dict(json.loads(path.read_text()))


def save_design(design: DesignMatrix, path) -> None:
    _write_csv(path, design.names, ([fmt_real(v) for v in row] for row in design.points))
    meta = {"ranges": [list(r) for r in design.ranges],
            "log_scaled": list(design.log_scaled)}
    _sibling(path, ".meta.json").write_text(json.dumps(meta, indent=2))


def load_design(path, meta_path=None) -> DesignMatrix:
    """Load a design CSV plus its ``<stem>.meta.json`` sibling."""
    header, rows = _read_csv(path)
    if len(set(header)) != len(header):
        raise ValidationError("duplicate parameter name")
    try:
        pts = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"unparseable design value: {exc}") from None
    if any(len(r) != len(header) for r in rows):
        raise ValidationError("design row length does not match header")
    meta_path = Path(meta_path) if meta_path else _sibling(path, ".meta.json")
    ranges, log_scaled = (), ()
    if meta_path.is_file():
        meta = json.loads(meta_path.read_text())
        ranges = tuple(tuple(r) for r in meta["ranges"])
        log_scaled = tuple(meta["log_scaled"])
    pts = pts.reshape(len(rows), len(header))
    return DesignMatrix(pts, tuple(header), ranges, log_scaled)


def _parse_cells(header, rows, n, what):
    if len(header) != n:
        raise ValidationError(f"{what} header has {len(header)} cells but grid has {n}")
    if header != cell_header(n):
        raise ValidationError(f"{what} header must be cell_0..cell_{n - 1}")
    for i, r in enumerate(rows):
        if len(r) != n:
            raise ValidationError(f"{what} row {i} has {len(r)} entries, expected {n}")
    try:
        arr = np.array([[int(float(v)) if float(v).is_integer() else 2 for v in r]
                        for r in rows], dtype=np.int64)
    except ValueError as exc:
        raise ValidationError(f"unparseable {what} entry: {exc}") from None
    return arr.reshape(len(rows), n)


def save_ensemble(ens: EnsembleMatrix, path, design_path=None) -> None:
    """Write the ensemble CSV, its ``.grid.json`` sibling and (optionally) the design."""
    _write_csv(path, cell_header(ens.n), ens.values.tolist())
    save_grid(ens.grid, _sibling(path, ".grid.json"))
    save_design(ens.design, design_path or _sibling(path, ".design.csv"))


def load_ensemble(path, grid_path=None, design_path=None) -> EnsembleMatrix:
    """Load an ensemble CSV.

    The grid is read from ``<stem>.grid.json`` and the design from
    ``<stem>.design.csv`` unless explicit paths are given. A missing design
    falls back to a placeholder with evenly spaced 1-d points so that pure
    lpca work does not need one.
    """
    header, rows = _read_csv(path)
    grid_path = Path(grid_path) if grid_path else _sibling(path, ".grid.json")
    if grid_path.is_file():
        grid = load_grid(grid_path)
    else:
        raise FileNotFoundError(f"grid spec not found: {grid_path}")
    values = _parse_cells(header, rows, grid.n, "ensemble")
    design_path = Path(design_path) if design_path else _sibling(path, ".design.csv")
    if design_path.is_file():
        design = load_design(design_path)
    else:
        design = DesignMatrix(np.linspace(0, 1, len(rows))[:, None])
    return EnsembleMatrix(design, grid, values)


def save_observation(obs: BinaryField, path) -> None:
    _write_csv(path, cell_header(obs.grid.n), [obs.values.tolist()])


def load_observation(path, grid: GridSpec) -> BinaryField:
    header, rows = _read_csv(path)
    if len(rows) != 1:
        raise ValidationError("observation CSV must contain exactly one data row")
    values = _parse_cells(header, rows, grid.n, "observation")
    return BinaryField(grid, values[0])


def save_vector(path, columns: dict) -> None:
    """Write named equal-length real columns as CSV (17 significant digits)."""
    names = list(columns)
    data = [np.ravel(np.asarray(columns[k], dtype=float)) for k in names]
    _write_csv(path, names, ([fmt_real(v) for v in row] for row in zip(*data)))


def load_columns(path) -> dict:
    header, rows = _read_csv(path)
    arr = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(header))
    return {h: arr[:, k] for k, h in enumerate(header)}


def save_matrix(path, mat, prefix="c") -> None:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    _write_csv(path, [f"{prefix}{k}" for k in range(mat.shape[1])],
               ([fmt_real(v) for v in row] for row in mat))


def load_matrix(path) -> np.ndarray:
    header, rows = _read_csv(path)
    return np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(header))


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
