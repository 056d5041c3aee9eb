"""Write the multi-room occupancy grid used by the obstacle scenario.

50 m x 50 m at 0.5 m resolution: four rooms separated by 0.5 m walls with
2 m doorways. Run from the repository root.
"""
import argparse

import numpy as np

from srcseek.env import OccupancyGrid, save_grid

RES = 0.5
SIZE = 50.0

# (x0, x1, y0, y1) wall rectangles and door rectangles cut out of them, in meters
WALLS = [
    (15.0, 15.5, 0.0, 50.0),
    (15.0, 50.0, 25.0, 25.5),
    (30.0, 30.5, 25.0, 50.0),
    (0.0, 15.0, 12.0, 12.5),
]
DOORS = [
    (15.0, 15.5, 6.0, 8.0),
    (15.0, 15.5, 30.0, 32.0),
    (26.0, 28.0, 25.0, 25.5),
    (40.0, 42.0, 25.0, 25.5),
    (30.0, 30.5, 40.0, 42.0),
    (5.0, 7.0, 12.0, 12.5),
]


def office_grid() -> OccupancyGrid:
    n = int(round(SIZE / RES))
    centers = (np.arange(n) + 0.5) * RES
    cx, cy = np.meshgrid(centers, centers, indexing="ij")

    def box(x0, x1, y0, y1):
        return (cx >= x0) & (cx < x1) & (cy >= y0) & (cy < y1)

    cells = np.zeros((n, n), dtype=bool)
    for r in WALLS:
        cells |= box(*r)
    for r in DOORS:
        cells &= ~box(*r)
    return OccupancyGrid(cells, RES, (0.0, 0.0))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", nargs="?", default="configs/maps/office.txt")
    args = ap.parse_args()
    save_grid(office_grid(), args.out)
    print(f"wrote {args.out}")
