"""Occupancy-grid environment and through-wall ray lengths.

The grid stores one boolean per cell (True = wall). Cell ``(ix, iy)`` covers
``origin + resolution * [ix, ix+1) x [iy, iy+1)``. Anything outside the grid
is free space.

Grid text format::

    width 4
    height 3
    resolution 0.5
    origin 0.0 0.0
    0000
    0110
    0000

Rows are listed top (largest y) first so the file reads like a map. Cells may
optionally be separated by whitespace.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np


class InvalidInput(ValueError):
    """Raised for non-finite query points or malformed grids."""


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    cells: np.ndarray  # shape (width_cells, height_cells), indexed [ix, iy]
    resolution: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)
    _any: bool = field(init=False, repr=False)

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.bool_)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise InvalidInput(f"grid must be 2-D with at least one cell, got {cells.shape}")
        if not (self.resolution > 0 and np.isfinite(self.resolution)):
            raise InvalidInput(f"resolution must be > 0, got {self.resolution}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "_any", bool(cells.any()))

    @property
    def width_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def height_cells(self) -> int:
        return self.cells.shape[1]

    @property
    def has_walls(self) -> bool:
        return self._any

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) in meters."""
        ox, oy = self.origin
        return (ox, ox + self.width_cells * self.resolution,
                oy, oy + self.height_cells * self.resolution)

    @classmethod
    def empty(cls, width_cells=1, height_cells=1, resolution=1.0, origin=(0.0, 0.0)):
        return cls(np.zeros((width_cells, height_cells), dtype=bool), resolution, origin)

    def cell_of(self, p) -> tuple[int, int] | None:
        """Index of the cell containing ``p`` or None when outside the grid."""
        ix = int(np.floor((p[0] - self.origin[0]) / self.resolution))
        iy = int(np.floor((p[1] - self.origin[1]) / self.resolution))
        if 0 <= ix < self.width_cells and 0 <= iy < self.height_cells:
            return ix, iy
        return None

    def with_cells(self, cells) -> "OccupancyGrid":
        return OccupancyGrid(cells, self.resolution, self.origin)


def load_grid(path) -> OccupancyGrid:
    header = {}
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key = line.split()[0]
        if key in ("width", "height", "resolution", "origin"):
            header[key] = line.split()[1:]
        else:
            rows.append(line.replace(" ", "").replace("\t", ""))
    missing = {"width", "height", "resolution", "origin"} - header.keys()
    if missing:
        raise InvalidInput(f"{path}: missing header keys {sorted(missing)}")
    width, height = int(header["width"][0]), int(header["height"][0])
    if len(rows) != height or any(len(r) != width for r in rows):
        raise InvalidInput(f"{path}: expected {height} rows of {width} cells")
    if any(c not in "01" for r in rows for c in r):
        raise InvalidInput(f"{path}: cells must be 0 or 1")
    # top row first in the file -> flip to iy = 0 at the bottom
    cells = np.array([[c == "1" for c in r] for r in reversed(rows)], dtype=bool).T
    return OccupancyGrid(cells, float(header["resolution"][0]),
                         (float(header["origin"][0]), float(header["origin"][1])))


def save_grid(grid: OccupancyGrid, path) -> None:
    lines = [f"width {grid.width_cells}", f"height {grid.height_cells}",
             f"resolution {grid.resolution!r}", f"origin {grid.origin[0]!r} {grid.origin[1]!r}"]
    for iy in range(grid.height_cells - 1, -1, -1):
        lines.append("".join("1" if c else "0" for c in grid.cells[:, iy]))
    Path(path).write_text("\n".join(lines) + "\n")


@numba.njit(cache=True)
def _segment_wall_length(cells, ox, oy, res, px, py, qx, qy):
    nx, ny = cells.shape
    # grid coordinates: one unit per cell
    ux, uy = (px - ox) / res, (py - oy) / res
    dx, dy = (qx - px) / res, (qy - py) / res
    seg_len = np.sqrt((qx - px) ** 2 + (qy - py) ** 2)
    if seg_len == 0.0:
        return 0.0

    # clip parameter range to the grid box (Liang-Barsky)
    t0, t1 = 0.0, 1.0
    for d, u, hi in ((dx, ux, float(nx)), (dy, uy, float(ny))):
        if d == 0.0:
            if u < 0.0 or u > hi:
                return 0.0
        else:
            ta, tb = (0.0 - u) / d, (hi - u) / d
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
    if t1 <= t0:
        return 0.0

    # Walk the merged sequence of vertical and horizontal line crossings.
    # Cell membership of each piece is decided at its midpoint, which makes
    # the result independent of the traversal direction.
    if dx > 0.0:
        sx, nextx = 1.0, np.floor(ux + t0 * dx) + 1.0
    elif dx < 0.0:
        sx, nextx = -1.0, np.ceil(ux + t0 * dx) - 1.0
    else:
        sx, nextx = 0.0, 0.0
    if dy > 0.0:
        sy, nexty = 1.0, np.floor(uy + t0 * dy) + 1.0
    elif dy < 0.0:
        sy, nexty = -1.0, np.ceil(uy + t0 * dy) - 1.0
    else:
        sy, nexty = 0.0, 0.0

    total = 0.0
    t = t0
    while t < t1:
        tx = (nextx - ux) / dx if sx != 0.0 else np.inf
        ty = (nexty - uy) / dy if sy != 0.0 else np.inf
        tn = min(tx, ty, t1)
        if tn > t:
            tm = 0.5 * (t + tn)
            ix = int(np.floor(ux + tm * dx))
            iy = int(np.floor(uy + tm * dy))
            if 0 <= ix < nx and 0 <= iy < ny and cells[ix, iy]:
                total += (tn - t) * seg_len
        if tx <= tn:
            nextx += sx
        if ty <= tn:
            nexty += sy
        t = tn
    return total


@numba.njit(cache=True)
def _pairwise_wall_length(cells, ox, oy, res, P, Q):
    out = np.empty((P.shape[0], Q.shape[0]))
    for a in range(P.shape[0]):
        for b in range(Q.shape[0]):
            out[a, b] = _segment_wall_length(cells, ox, oy, res, P[a, 0], P[a, 1], Q[b, 0], Q[b, 1])
    return out


def _as_points(p, name):
    arr = np.asarray(p, dtype=float)
    if arr.shape[-1] != 2:
        raise InvalidInput(f"{name} must be 2-D points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite coordinates")
    return arr


def wall_distance(grid: OccupancyGrid | None, p, q) -> float:
    """Length (m) of the segment ``p -> q`` lying inside occupied cells."""
    p, q = _as_points(p, "p"), _as_points(q, "q")
    if grid is None or not grid.has_walls:
        return 0.0
    return float(_segment_wall_length(grid.cells, grid.origin[0], grid.origin[1],
                                      grid.resolution, p[0], p[1], q[0], q[1]))


def wall_distances(grid: OccupancyGrid | None, P, Q) -> np.ndarray:
    """Pairwise wall lengths, shape ``(len(P), len(Q))``."""
    P = np.atleast_2d(_as_points(P, "P"))
    Q = np.atleast_2d(_as_points(Q, "Q"))
    if grid is None or not grid.has_walls:
        return np.zeros((P.shape[0], Q.shape[0]))
    return _pairwise_wall_length(grid.cells, grid.origin[0], grid.origin[1], grid.resolution,
                                 np.ascontiguousarray(P), np.ascontiguousarray(Q))


def is_los(grid: OccupancyGrid | None, p, q) -> bool:
    return wall_distance(grid, p, q) == 0.0
