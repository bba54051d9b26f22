"""Frontier detection, clustering, stable IDs and viewpoints."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .worldsim import (FACE, FREE, FULL, OCCUPIED, UNKNOWN, Cell, OccupancyGrid, Pose,
                       cell_center)

# A new cluster inherits a previous ID when at least this share of its cells
# belonged to that previous cluster.
INHERIT_FRACTION = 0.5
DEFAULT_CLEARANCE = 1.0
DEFAULT_SEARCH_MARGIN = 2

_FACE_OFFSETS = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]


@dataclass(frozen=True)
class Frontier:
    id: int
    cells: tuple[Cell, ...]
    avg_position: tuple[float, float, float]
    viewpoint: Pose | None = None
    planner_cost: float | None = None

    @property
    def feasible(self) -> bool:
        return self.viewpoint is not None


@dataclass(frozen=True)
class FrontierSet:
    frontiers: tuple[Frontier, ...] = ()
    generation: int = 0
    next_id: int = 0
    _index: dict = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {f.id: f for f in self.frontiers})

    def __len__(self) -> int:
        return len(self.frontiers)

    def __iter__(self):
        return iter(self.frontiers)

    def ids(self) -> list[int]:
        return [f.id for f in self.frontiers]

    def get(self, fid: int) -> Frontier | None:
        return self._index.get(fid)


def frontier_mask(grid: OccupancyGrid) -> np.ndarray:
    """Free cells sharing a face with an Unknown cell."""
    unknown = grid.cells == UNKNOWN
    return (grid.cells == FREE) & ndimage.binary_dilation(unknown, structure=FACE)


def clearance_field(grid: OccupancyGrid) -> np.ndarray:
    """Euclidean distance, in cells, from each cell centre to the nearest Occupied cell."""
    occ = grid.cells == OCCUPIED
    if not occ.any():
        return np.full(grid.dims, np.inf)
    return ndimage.distance_transform_edt(~occ)


def unknown_neighbors(cells: Sequence[Cell], grid: OccupancyGrid) -> list[Cell]:
    dims = grid.dims
    out = set()
    for c in cells:
        for d in _FACE_OFFSETS:
            n = (c[0] + d[0], c[1] + d[1], c[2] + d[2])
            if 0 <= n[0] < dims[0] and 0 <= n[1] < dims[1] and 0 <= n[2] < dims[2] \
                    and grid.cells[n] == UNKNOWN:
                out.add(n)
    return sorted(out)


def frontier_viewpoint(f: Frontier, grid: OccupancyGrid, *, clearance: float = DEFAULT_CLEARANCE,
                       margin: int = DEFAULT_SEARCH_MARGIN,
                       clearance_map: np.ndarray | None = None) -> Pose | None:
    """Viewpoint for ``f``, or ``None`` when no clear Free cell exists near it.

    The search covers the cluster's bounding box grown by ``margin`` cells.
    The chosen cell is the Free cell with clearance >= ``clearance`` whose centre
    is nearest ``f.avg_position`` (lexicographic index breaks ties); the yaw
    faces the centroid of the cluster's Unknown neighbours.
    """
    if not f.cells:
        raise ValueError("empty frontier")
    if clearance_map is None:
        clearance_map = clearance_field(grid)
    res = grid.resolution
    pts = np.asarray(f.cells)
    lo = np.maximum(pts.min(axis=0) - margin, 0)
    hi = np.minimum(pts.max(axis=0) + margin + 1, grid.dims)
    box = tuple(slice(a, b) for a, b in zip(lo, hi))
    ok = (grid.cells[box] == FREE) & (clearance_map[box] >= clearance)
    cand = np.argwhere(ok)
    if cand.size == 0:
        return None
    cand = cand + lo
    centers = (cand + 0.5) * res
    d2 = ((centers - np.asarray(f.avg_position)) ** 2).sum(axis=1)
    best = tuple(int(v) for v in cand[int(np.argmin(d2))])
    pos = cell_center(best, res)
    unk = unknown_neighbors(f.cells, grid)
    yaw = 0.0
    if unk:
        cx, cy = (np.asarray(unk, dtype=float)[:, :2] + 0.5).mean(axis=0) * res
        dx, dy = cx - pos[0], cy - pos[1]
        if dx or dy:
            yaw = math.atan2(dy, dx)
    return Pose(pos, yaw)


def _assign_ids(clusters: list[np.ndarray], previous: FrontierSet | None,
                dims: tuple[int, int, int]) -> tuple[list[int], int]:
    next_id = previous.next_id if previous is not None else 0
    owner = np.full(dims, -1, dtype=np.int64)
    if previous is not None:
        for f in previous.frontiers:
            owner[tuple(np.asarray(f.cells).T)] = f.id
    pairs = []
    for ci, cl in enumerate(clusters):
        prev = owner[tuple(cl.T)]
        prev = prev[prev >= 0]
        if prev.size == 0:
            continue
        ids, counts = np.unique(prev, return_counts=True)
        for pid, cnt in zip(ids.tolist(), counts.tolist()):
            if cnt >= INHERIT_FRACTION * len(cl):
                pairs.append((-cnt, pid, ci))
    # Largest overlap first, ties to the lower previous ID; each previous ID is
    # inherited at most once so IDs stay unique when a cluster splits.
    pairs.sort()
    assigned: list[int | None] = [None] * len(clusters)
    used = set()
    for _, pid, ci in pairs:
        if assigned[ci] is None and pid not in used:
            assigned[ci] = pid
            used.add(pid)
    out = []
    for a in assigned:
        if a is None:
            a = next_id
            next_id += 1
        out.append(a)
    return out, next_id


def find_frontiers(grid: OccupancyGrid, previous: FrontierSet | None = None, *,
                   clearance: float = DEFAULT_CLEARANCE,
                   margin: int = DEFAULT_SEARCH_MARGIN) -> FrontierSet:
    mask = frontier_mask(grid)
    labels, n = ndimage.label(mask, structure=FULL)
    generation = previous.generation + 1 if previous is not None else 0
    if n == 0:
        return FrontierSet((), generation, previous.next_id if previous is not None else 0)
    # Cells come out of argwhere in lexicographic order, so cluster order is
    # the order of each cluster's smallest cell.
    coords = np.argwhere(mask)
    lab = labels[tuple(coords.T)]
    order = np.argsort(lab, kind="stable")
    coords, lab = coords[order], lab[order]
    splits = np.flatnonzero(np.diff(lab)) + 1
    clusters = np.split(coords, splits)
    ids, next_id = _assign_ids(clusters, previous, grid.dims)
    cmap = clearance_field(grid)
    res = grid.resolution
    frontiers = []
    for fid, cl in zip(ids, clusters):
        cells = tuple((int(a), int(b), int(c)) for a, b, c in cl)
        avg = tuple(float(v) for v in ((cl + 0.5) * res).mean(axis=0))
        f = Frontier(fid, cells, avg)
        vp = frontier_viewpoint(f, grid, clearance=clearance, margin=margin, clearance_map=cmap)
        frontiers.append(Frontier(fid, cells, avg, vp))
    frontiers.sort(key=lambda f: f.id)
    return FrontierSet(tuple(frontiers), generation, next_id)
