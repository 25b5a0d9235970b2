"""Versioned CSV snapshots of fields, particle ensembles and trajectory logs.

Every file opens with a schema comment; field snapshots add a grid line so
they can be read back without outside context:

    # schema: field v1
    # grid: dimension=1 half_width=4 cells=8 centering=cell
    x1,rho
    -3.75,0.00012073
    -2.75,0.0183

Values are written with ``repr`` so a write/read round trip is exact.
Malformed input raises ``SnapshotParseError`` naming the 1-based line.
"""

from __future__ import annotations

import csv
import io
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import SnapshotParseError
from .grid import CENTERINGS, Field, Grid

SCHEMA_VERSIONS = {"field": 1, "ensemble": 1, "trajectory": 1}

_SCHEMA_RE = re.compile(r"#\s*schema:\s*([\w-]+)\s+v(\d+)\s*$")
_GRID_RE = re.compile(
    r"#\s*grid:\s*dimension=(\d+)\s+half_width=(\S+)\s+cells=(\d+)\s+centering=(\w+)\s*$"
)
_COORD_TOL = 1e-9

TRAJECTORY_COLUMNS = ["time", "mass", "min_rho", "kl", "dissipation", "transport"]


def schema_line(name: str, version: Optional[int] = None) -> str:
    return f"# schema: {name} v{version or SCHEMA_VERSIONS.get(name, 1)}"


def write_table(
    path: Path,
    schema: str,
    rows: Iterable[Dict],
    fieldnames: Sequence[str],
    preamble: Sequence[str] = (),
) -> Path:
    """csv.DictWriter table behind a schema comment (and optional extra comment lines)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        f.write(schema_line(schema) + "\n")
        for line in preamble:
            f.write(line + "\n")
        w = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in fieldnames})
    return path


def _coordinate_names(d: int) -> List[str]:
    return [f"x{a + 1}" for a in range(d)]


def write_field(path: Path, field: Field) -> Path:
    grid = field.grid
    names = _coordinate_names(grid.dimension)
    pts = grid.points(field.centering).reshape(-1, grid.dimension)
    rows = (
        {**{n: repr(float(c)) for n, c in zip(names, p)}, "rho": repr(float(v))}
        for p, v in zip(pts, field.values.ravel())
    )
    grid_line = (
        f"# grid: dimension={grid.dimension} half_width={grid.half_width!r} "
        f"cells={grid.cells} centering={field.centering}"
    )
    return write_table(path, "field", rows, names + ["rho"], preamble=[grid_line])


def write_ensemble(path: Path, positions: np.ndarray) -> Path:
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    names = _coordinate_names(pos.shape[1])
    rows = (
        {"particle": i, **{n: repr(float(c)) for n, c in zip(names, p)}}
        for i, p in enumerate(pos)
    )
    return write_table(path, "ensemble", rows, ["particle"] + names)


def write_trajectory(path: Path, rows: Iterable[Dict]) -> Path:
    return write_table(path, "trajectory", rows, TRAJECTORY_COLUMNS)


class SnapshotReader:
    """Parses a field snapshot; ``to_field()`` rebuilds the ``Field``."""

    def __init__(self, text: str, source: str = "<string>"):
        self.source = source
        self.lines = text.splitlines()
        self.schema: Optional[str] = None
        self.version: Optional[int] = None
        self.grid: Optional[Grid] = None
        self.centering: str = "cell"
        self.values: Optional[np.ndarray] = None
        self._parse()

    # ------------------------------------------------------------------ #
    # Core parsing
    # ------------------------------------------------------------------ #
    def _parse(self) -> None:
        if not self.lines:
            raise SnapshotParseError("empty snapshot", 1)
        m = _SCHEMA_RE.match(self.lines[0].strip())
        if not m:
            raise SnapshotParseError("missing '# schema: <name> v<k>' line", 1)
        self.schema, self.version = m.group(1), int(m.group(2))
        if self.schema != "field":
            raise SnapshotParseError(f"expected a field snapshot, got schema {self.schema!r}", 1)
        if self.version != SCHEMA_VERSIONS["field"]:
            raise SnapshotParseError(f"unsupported field schema version v{self.version}", 1)
        self._parse_grid(self.lines[1] if len(self.lines) > 1 else "")
        self._parse_rows()

    def _parse_grid(self, line: str) -> None:
        m = _GRID_RE.match(line.strip())
        if not m:
            raise SnapshotParseError("missing or malformed '# grid:' line", 2)
        d, half_width, cells, centering = m.groups()
        if centering not in CENTERINGS:
            raise SnapshotParseError(f"unknown centering {centering!r}", 2)
        try:
            self.grid = Grid(int(d), float(half_width), int(cells))
        except ValueError as exc:
            raise SnapshotParseError(str(exc), 2) from exc
        self.centering = centering

    def _parse_rows(self) -> None:
        grid = self.grid
        d = grid.dimension
        expected_header = _coordinate_names(d) + ["rho"]
        header_line = 3
        if len(self.lines) < header_line:
            raise SnapshotParseError("missing column header", header_line)
        header = next(csv.reader(io.StringIO(self.lines[header_line - 1])))
        if [h.strip() for h in header] != expected_header:
            raise SnapshotParseError(f"expected columns {expected_header}, got {header}", header_line)

        expected_pts = grid.points(self.centering).reshape(-1, d)
        total = expected_pts.shape[0]
        values = np.empty(total)
        count = 0
        tol = _COORD_TOL * max(1.0, grid.half_width)
        for offset, line in enumerate(self.lines[header_line:], start=header_line + 1):
            if not line.strip():
                continue
            cells = next(csv.reader(io.StringIO(line)))
            if len(cells) != d + 1:
                raise SnapshotParseError(f"expected {d + 1} columns, got {len(cells)}", offset)
            try:
                nums = [float(c) for c in cells]
            except ValueError as exc:
                raise SnapshotParseError(f"non-numeric entry ({exc})", offset) from exc
            if not np.all(np.isfinite(nums)):
                raise SnapshotParseError("non-finite entry", offset)
            if count >= total:
                raise SnapshotParseError(f"more than {total} data rows", offset)
            if np.max(np.abs(np.array(nums[:d]) - expected_pts[count])) > tol:
                raise SnapshotParseError(
                    f"coordinates {nums[:d]} do not match grid point {expected_pts[count].tolist()}", offset
                )
            values[count] = nums[d]
            count += 1
        if count != total:
            raise SnapshotParseError(f"expected {total} data rows, found {count}", len(self.lines) + 1)
        self.values = values.reshape(grid.shape)

    def to_field(self) -> Field:
        return Field(self.grid, self.values, self.centering)


def read_field(path: Path) -> Field:
    path = Path(path)
    return SnapshotReader(path.read_text(encoding="utf-8"), str(path)).to_field()
