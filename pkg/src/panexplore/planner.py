"""Grid path planning over known-Free cells and the admissibility predicate."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ContractError
from .frontier import Frontier
from .worldsim import FREE, Cell, OccupancyGrid, Pose, cell_center, cell_of, in_bounds

SQRT2 = math.sqrt(2.0)
# Costs are rounded to this many decimals (meters) so that the A* route
# length and the single-source field agree bit for bit.
COST_DECIMALS = 9


@dataclass(frozen=True)
class PlannedPath:
    waypoints: tuple[tuple[float, float, float], ...]
    length: float
    cells: tuple[Cell, ...]


def neighbor_offsets(dims: tuple[int, int, int], diagonal: bool = False) -> list[Cell]:
    """Move set: 6-adjacency in 3D, 4- or 8-adjacency in a planar world."""
    if dims[2] > 1:
        return [(-1, 0, 0), (0, -1, 0), (0, 0, -1), (0, 0, 1), (0, 1, 0), (1, 0, 0)]
    if diagonal:
        return [(dx, dy, 0) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if dx or dy]
    return [(-1, 0, 0), (0, -1, 0), (0, 1, 0), (1, 0, 0)]


def _key(axial: int, diag: int) -> float:
    return axial + diag * SQRT2


def _search(grid: OccupancyGrid, start: Cell, goal: Cell | None, diagonal: bool):
    """A* to ``goal`` (Dijkstra over everything when ``goal`` is None).

    Heap entries order by (priority, cell), so equal-priority expansions
    follow lexicographic cell index.  Costs are kept as integer (axial,
    diagonal) step counts and compared through one key function, so the
    same route always yields a bit-identical cost.
    """
    free = (grid.cells == FREE).tolist()
    X, Y, Z = grid.dims
    offsets = neighbor_offsets(grid.dims, diagonal)
    if goal is None:
        def h(c: Cell) -> float:
            return 0.0
    elif diagonal and Z == 1:
        gx, gy = goal[0], goal[1]

        def h(c: Cell) -> float:
            dx, dy = abs(c[0] - gx), abs(c[1] - gy)
            return abs(dx - dy) + min(dx, dy) * SQRT2 * (1 - 1e-12)
    else:
        def h(c: Cell) -> float:
            return float(abs(c[0] - goal[0]) + abs(c[1] - goal[1]) + abs(c[2] - goal[2]))

    best: dict[Cell, tuple[int, int]] = {start: (0, 0)}
    parent: dict[Cell, Cell | None] = {start: None}
    closed: set[Cell] = set()
    heap = [(h(start), start)]
    while heap:
        _, c = heapq.heappop(heap)
        if c in closed:
            continue
        closed.add(c)
        if c == goal:
            break
        a, d = best[c]
        for dx, dy, dz in offsets:
            n = (c[0] + dx, c[1] + dy, c[2] + dz)
            if not (0 <= n[0] < X and 0 <= n[1] < Y and 0 <= n[2] < Z) or n in closed:
                continue
            if not free[n[0]][n[1]][n[2]]:
                continue
            if dx and dy:
                # No corner cutting past an obstacle.
                if not (free[c[0] + dx][c[1]][c[2]] and free[c[0]][c[1] + dy][c[2]]):
                    continue
                nc = (a, d + 1)
            else:
                nc = (a + 1, d)
            old = best.get(n)
            if old is None or _key(*nc) < _key(*old):
                best[n] = nc
                parent[n] = c
                heapq.heappush(heap, (_key(*nc) + h(n), n))
    return best, parent, closed


def plan_path(grid: OccupancyGrid, start: Pose, goal: Pose, *,
              diagonal: bool = False) -> PlannedPath | None:
    res = grid.resolution
    s = cell_of(start.position, res)
    g = cell_of(goal.position, res)
    if not grid.is_free(s):
        raise ContractError(f"start cell {s} is not Free in the belief grid")
    if not grid.is_free(g):
        return None
    best, parent, closed = _search(grid, s, g, diagonal)
    if g not in closed:
        return None
    cells = []
    c: Cell | None = g
    while c is not None:
        cells.append(c)
        c = parent[c]
    cells.reverse()
    a, d = best[g]
    length = round(_key(a, d) * res, COST_DECIMALS)
    return PlannedPath(tuple(cell_center(c, res) for c in cells), length, tuple(cells))


def grid_graph(grid: OccupancyGrid, diagonal: bool = False) -> sparse.csr_matrix:
    """Sparse adjacency over flat cell indices; edge weights in meters."""
    free = grid.cells == FREE
    dims = grid.dims
    n = free.size
    flat = np.arange(n).reshape(dims)
    rows, cols, w = [], [], []
    for off in neighbor_offsets(dims, diagonal):
        src = tuple(slice(max(0, -o), d - max(0, o)) for o, d in zip(off, dims))
        dst = tuple(slice(max(0, o), d - max(0, -o)) for o, d in zip(off, dims))
        ok = free[src] & free[dst]
        dx, dy, _ = off
        if dx and dy:
            # No corner cutting: both orthogonal neighbours must be free.
            via_x = tuple(slice(max(0, o), d - max(0, -o)) if k == 0 else s_
                          for k, (o, d, s_) in enumerate(zip(off, dims, src)))
            via_y = tuple(slice(max(0, o), d - max(0, -o)) if k == 1 else s_
                          for k, (o, d, s_) in enumerate(zip(off, dims, src)))
            ok &= free[via_x] & free[via_y]
            cost = SQRT2
        else:
            cost = 1.0
        rows.append(flat[src][ok])
        cols.append(flat[dst][ok])
        w.append(np.full(int(ok.sum()), cost * grid.resolution))
    r, c, ww = (np.concatenate(v) if v else np.empty(0) for v in (rows, cols, w))
    return sparse.csr_matrix((ww, (r.astype(np.intp), c.astype(np.intp))), shape=(n, n))


def path_cost_field(grid: OccupancyGrid, start: Pose, *, diagonal: bool = False) -> np.ndarray:
    """Shortest-path length in meters from ``start`` to every cell (inf if unreachable)."""
    s = cell_of(start.position, grid.resolution)
    if not grid.is_free(s):
        raise ContractError(f"start cell {s} is not Free in the belief grid")
    src = int(np.ravel_multi_index(s, grid.dims))
    dist = csgraph.dijkstra(grid_graph(grid, diagonal), directed=False, indices=src)
    return np.round(dist, COST_DECIMALS).reshape(grid.dims)


def admissible(grid: OccupancyGrid, pose: Pose, f: Frontier, *, diagonal: bool = False) -> int:
    if f.viewpoint is None:
        return 0
    return int(plan_path(grid, pose, f.viewpoint, diagonal=diagonal) is not None)


def viewpoint_cost(field: np.ndarray, f: Frontier, resolution: float) -> float:
    """Planner cost to ``f``'s viewpoint read from a cost field; inf when inadmissible."""
    if f.viewpoint is None:
        return math.inf
    c = cell_of(f.viewpoint.position, resolution)
    if not in_bounds(c, field.shape):
        return math.inf
    return float(field[c])
