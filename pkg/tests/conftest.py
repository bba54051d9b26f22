from __future__ import annotations

from collections import deque

import numpy as np

from panexplore.worldsim import FREE, OCCUPIED, UNKNOWN, GroundTruthWorld, OccupancyGrid

_CHARS = {"#": OCCUPIED, ".": FREE, "?": UNKNOWN}


def cells_from_rows(rows: list[str]) -> np.ndarray:
    """Planar cell array from text rows; row index is y, column index is x."""
    Y, X = len(rows), len(rows[0])
    out = np.empty((X, Y, 1), dtype=np.uint8)
    for y, row in enumerate(rows):
        assert len(row) == X
        for x, ch in enumerate(row):
            out[x, y, 0] = _CHARS[ch]
    return out


def world_from_rows(rows: list[str], resolution: float = 1.0, name: str = "w") -> GroundTruthWorld:
    return GroundTruthWorld(cells_from_rows(rows), resolution, name)


def grid_from_rows(rows: list[str], resolution: float = 1.0) -> OccupancyGrid:
    return OccupancyGrid(cells_from_rows(rows), resolution)


def box_rows(X: int, Y: int) -> list[str]:
    return ["#" * X] + ["#" + "." * (X - 2) + "#" for _ in range(Y - 2)] + ["#" * X]


def face_neighbors(c, dims):
    for a in range(3):
        for s in (-1, 1):
            n = list(c)
            n[a] += s
            if 0 <= n[a] < dims[a]:
                yield tuple(n)


def bfs_reach(passable: np.ndarray, start) -> set:
    """Face-connected flood fill over a boolean array."""
    seen = {tuple(start)}
    q = deque([tuple(start)])
    while q:
        c = q.popleft()
        for n in face_neighbors(c, passable.shape):
            if n not in seen and passable[n]:
                seen.add(n)
                q.append(n)
    return seen
