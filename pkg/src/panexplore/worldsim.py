"""Ground-truth worlds, the depth-sensor model, and the occupancy belief.

Cells are indexed ``(x, y, z)`` and stored in ``numpy`` arrays of shape
``(X, Y, Z)``.  A world with ``Z == 1`` is a planar world: the robot flies
at the single slab's centre height and every neighbourhood collapses to
the plane because the out-of-range z neighbours simply do not exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DomainError

UNKNOWN = np.uint8(0)
FREE = np.uint8(1)
OCCUPIED = np.uint8(2)

TWO_PI = 2.0 * math.pi
SCAN_CACHE_LIMIT = 50_000

Cell = tuple[int, int, int]

# Face adjacency (6 in 3D, 4 in a planar world).
FACE = ndimage.generate_binary_structure(3, 1)
# Full adjacency (26 in 3D, 8 in a planar world).
FULL = ndimage.generate_binary_structure(3, 3)


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    def with_yaw(self, yaw: float) -> "Pose":
        return Pose(self.position, yaw)


def cell_of(position: Sequence[float], resolution: float) -> Cell:
    return tuple(int(math.floor(v / resolution)) for v in position)  # type: ignore[return-value]


def cell_center(cell: Sequence[int], resolution: float) -> tuple[float, float, float]:
    return tuple((c + 0.5) * resolution for c in cell)  # type: ignore[return-value]


def in_bounds(cell: Sequence[int], dims: Sequence[int]) -> bool:
    return all(0 <= c < d for c, d in zip(cell, dims))


@dataclass
class GroundTruthWorld:
    cells: np.ndarray
    resolution: float
    name: str = "world"
    # Scans are a pure function of (world, pose, sensor); memoised per world.
    _scans: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        self.cells.flags.writeable = False
        if self.cells.ndim != 3 or min(self.cells.shape) < 1:
            raise ConfigError(f"world must be a non-empty 3D array, got shape {self.cells.shape}")
        if not self.resolution > 0:
            raise ConfigError("resolution must be positive")
        if not np.isin(self.cells, (FREE, OCCUPIED)).all():
            raise ConfigError("ground truth cells must be Free or Occupied")
        if not is_sealed(self.cells):
            raise ConfigError(f"world {self.name!r} is not sealed: a boundary cell is Free")

    def __getstate__(self) -> dict:
        state = dict(self.__dict__)
        state["_scans"] = {}
        return state

    def __setstate__(self, state: dict) -> None:
        self.__dict__.update(state)
        self.cells.flags.writeable = False

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.cells.shape  # type: ignore[return-value]

    @property
    def planar(self) -> bool:
        return self.dims[2] == 1

    def is_free(self, cell: Sequence[int]) -> bool:
        return in_bounds(cell, self.dims) and self.cells[tuple(cell)] == FREE


def is_sealed(cells: np.ndarray) -> bool:
    """True when every boundary face of each axis longer than one cell is Occupied.

    A single-cell z axis is the planar case and has no z boundary to seal.
    """
    for axis, n in enumerate(cells.shape):
        if n == 1:
            continue
        lo = np.take(cells, 0, axis=axis)
        hi = np.take(cells, n - 1, axis=axis)
        if (lo != OCCUPIED).any() or (hi != OCCUPIED).any():
            return False
    return True


def dumps_world(world: GroundTruthWorld) -> str:
    X, Y, Z = world.dims
    lines = [f"dims {X} {Y} {Z} resolution {world.resolution!r}"]
    for z in range(Z):
        for y in range(Y):
            lines.append("".join("#" if world.cells[x, y, z] == OCCUPIED else "." for x in range(X)))
    return "\n".join(lines) + "\n"


def loads_world(text: str, name: str = "world") -> GroundTruthWorld:
    """Parse the plain-text world format.

    Header ``dims X Y Z resolution R``, then Z slabs of Y rows of X characters
    (``#`` Occupied, ``.`` Free).  Row ``y`` of slab ``z`` is the ``(z*Y + y)``-th
    non-blank line after the header.
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigError("empty world file")
    head = lines[0].split()
    if len(head) != 6 or head[0] != "dims" or head[4] != "resolution":
        raise ConfigError(f"bad world header: {lines[0]!r}")
    try:
        X, Y, Z = (int(v) for v in head[1:4])
        res = float(head[5])
    except ValueError as exc:
        raise ConfigError(f"bad world header: {lines[0]!r}") from exc
    if min(X, Y, Z) < 1 or not res > 0:
        raise ConfigError("dims and resolution must be strictly positive")
    rows = lines[1:]
    if len(rows) != Y * Z:
        raise ConfigError(f"expected {Y * Z} rows, found {len(rows)}")
    cells = np.empty((X, Y, Z), dtype=np.uint8)
    for i, row in enumerate(rows):
        z, y = divmod(i, Y)
        if len(row) != X or set(row) - {"#", "."}:
            raise ConfigError(f"bad row {i + 2}: {row!r}")
        cells[:, y, z] = [OCCUPIED if ch == "#" else FREE for ch in row]
    return GroundTruthWorld(cells, res, name)


def load_world(path: str | Path) -> GroundTruthWorld:
    path = Path(path)
    return loads_world(path.read_text(encoding="utf-8"), name=path.stem)


def save_world(world: GroundTruthWorld, path: str | Path) -> None:
    Path(path).write_text(dumps_world(world), encoding="utf-8")


@dataclass
class OccupancyGrid:
    cells: np.ndarray
    resolution: float

    @classmethod
    def unknown_like(cls, world: GroundTruthWorld) -> "OccupancyGrid":
        return cls(np.zeros(world.dims, dtype=np.uint8), world.resolution)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.cells.shape  # type: ignore[return-value]

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.cells.copy(), self.resolution)

    def known_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    def is_free(self, cell: Sequence[int]) -> bool:
        return in_bounds(cell, self.dims) and self.cells[tuple(cell)] == FREE


@dataclass(frozen=True)
class Ray:
    bearing: float
    range: float
    hit: bool
    elevation: float = 0.0
    # Discrete traversal, origin cell first; the hit cell (if any) is last.
    cells: tuple[Cell, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class DepthScan:
    origin: Pose
    rays: tuple[Ray, ...]
    max_range: float
    fov: float
    dims: tuple[int, int, int]


@dataclass(frozen=True)
class SensorConfig:
    fov: float = math.pi / 2
    max_range: float = 5.0
    n_rays: int = 31
    # Full-3D worlds only: elevation spread of the ray fan.
    vertical_fov: float = 0.0
    n_vertical: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.fov <= TWO_PI + 1e-12:
            raise ConfigError("fov must be in (0, 2*pi]")
        if not self.max_range > 0:
            raise ConfigError("max_range must be positive")
        if self.n_rays < 1 or self.n_vertical < 1:
            raise ConfigError("ray counts must be >= 1")


def traverse(origin: Sequence[float], direction: Sequence[float], max_t: float,
             dims: Sequence[int]) -> Iterator[tuple[Cell, float]]:
    """Amanatides-Woo grid walk in cell units.

    Yields ``(cell, t_entry)`` starting with the origin cell at ``t = 0``.
    Stops before the first cell whose entry parameter exceeds ``max_t`` or
    that falls outside ``dims``.  Exact corner crossings step the lowest axis
    first, so every consecutive pair of cells shares a face.
    """
    cell = [int(math.floor(v)) for v in origin]
    if not in_bounds(cell, dims):
        return
    step = [0, 0, 0]
    t_max = [math.inf] * 3
    t_delta = [math.inf] * 3
    for a in range(3):
        d = direction[a]
        if d > 0:
            step[a] = 1
            t_max[a] = (cell[a] + 1 - origin[a]) / d
            t_delta[a] = 1.0 / d
        elif d < 0:
            step[a] = -1
            t_max[a] = (cell[a] - origin[a]) / d
            t_delta[a] = -1.0 / d
    yield (cell[0], cell[1], cell[2]), 0.0
    while True:
        a = 0
        if t_max[1] < t_max[a]:
            a = 1
        if t_max[2] < t_max[a]:
            a = 2
        t = t_max[a]
        if t > max_t:
            return
        cell[a] += step[a]
        if not 0 <= cell[a] < dims[a]:
            return
        t_max[a] += t_delta[a]
        yield (cell[0], cell[1], cell[2]), t


def ray_bearings(yaw: float, fov: float, n_rays: int) -> list[float]:
    """Bearings of ``n_rays`` rays spread uniformly over ``fov`` centred on ``yaw``.

    Each ray sits at the centre of its angular bin, so a full circle has no
    duplicated ray and an odd count always includes ``yaw`` itself.
    """
    return [wrap_angle(yaw - fov / 2 + fov * (i + 0.5) / n_rays) for i in range(n_rays)]


def _cast(truth: np.ndarray, origin_cu: Sequence[float], direction: Sequence[float],
          max_t: float) -> tuple[list[Cell], float, bool]:
    cells: list[Cell] = []
    dims = truth.shape
    for cell, t in traverse(origin_cu, direction, max_t, dims):
        cells.append(cell)
        if truth[cell] == OCCUPIED:
            return cells, t, True
    return cells, max_t, False


def cast_depth_scan(world: GroundTruthWorld, pose: Pose, fov: float, max_range: float,
                    n_rays: int, *, vertical_fov: float = 0.0, n_vertical: int = 1) -> DepthScan:
    res = world.resolution
    origin_cell = cell_of(pose.position, res)
    if not in_bounds(origin_cell, world.dims):
        raise DomainError(f"pose {pose.position} lies outside the world")
    if not world.is_free(origin_cell):
        raise DomainError(f"pose {pose.position} is not in free space")
    if not 0 < fov <= TWO_PI + 1e-12 or n_rays < 1 or not max_range > 0:
        raise DomainError("need 0 < fov <= 2*pi, n_rays >= 1, max_range > 0")
    key = (pose.position, pose.yaw, fov, max_range, n_rays, vertical_fov, n_vertical)
    cached = world._scans.get(key)
    if cached is not None:
        return cached
    if len(world._scans) >= SCAN_CACHE_LIMIT:
        world._scans.clear()
    origin_cu = [v / res for v in pose.position]
    max_t = max_range / res
    if world.planar or n_vertical == 1:
        elevations = [0.0]
    else:
        elevations = [-vertical_fov / 2 + vertical_fov * (j + 0.5) / n_vertical
                      for j in range(n_vertical)]
    rays = []
    for el in elevations:
        ce, se = math.cos(el), math.sin(el)
        for b in ray_bearings(pose.yaw, fov, n_rays):
            direction = (ce * math.cos(b), ce * math.sin(b), se)
            cells, t, hit = _cast(world.cells, origin_cu, direction, max_t)
            rays.append(Ray(b, t * res if hit else max_range, hit, el, tuple(cells)))
    out = DepthScan(pose, tuple(rays), float(max_range), float(fov), world.dims)
    world._scans[key] = out
    return out


def scan(world: GroundTruthWorld, pose: Pose, sensor: SensorConfig) -> DepthScan:
    return cast_depth_scan(world, pose, sensor.fov, sensor.max_range, sensor.n_rays,
                           vertical_fov=sensor.vertical_fov, n_vertical=sensor.n_vertical)


def scan_cells(scan_: DepthScan) -> np.ndarray:
    """Flat indices of every cell touched by the scan, deduplicated."""
    idx = [c for ray in scan_.rays for c in ray.cells]
    if not idx:
        return np.empty(0, dtype=np.intp)
    arr = np.asarray(idx, dtype=np.intp).T
    return np.unique(np.ravel_multi_index(tuple(arr), scan_.dims))


def integrate_scan(grid: OccupancyGrid, world: GroundTruthWorld,
                   scan_: DepthScan) -> tuple[OccupancyGrid, int]:
    """Write a scan into ``grid`` in place; returns the grid and the newly-known count.

    Sensing is noise-free, so every traversed cell takes its ground-truth
    state: cells before a hit are Free and the hit cell is Occupied.  A known
    cell that disagrees with the truth (a stale belief planted by a caller) is
    corrected; only Unknown cells count as newly known.
    """
    if grid.dims != world.dims or scan_.dims != world.dims:
        raise DomainError(f"dims mismatch: grid {grid.dims}, world {world.dims}, scan {scan_.dims}")
    flat = scan_cells(scan_)
    g = grid.cells.reshape(-1)
    new = int(np.count_nonzero(g[flat] == UNKNOWN))
    g[flat] = world.cells.reshape(-1)[flat]
    return grid, new


def observable_mask(world: GroundTruthWorld, start: Pose) -> np.ndarray:
    """Free cells face-connected to the start cell plus their Occupied face neighbours."""
    start_cell = cell_of(start.position, world.resolution)
    if not world.is_free(start_cell):
        raise DomainError(f"start {start.position} is not in free space")
    labels, _ = ndimage.label(world.cells == FREE, structure=FACE)
    reach = labels == labels[start_cell]
    walls = ndimage.binary_dilation(reach, structure=FACE) & (world.cells == OCCUPIED)
    return reach | walls


def coverage(grid: OccupancyGrid, world: GroundTruthWorld, start: Pose,
             mask: np.ndarray | None = None) -> float:
    if mask is None:
        mask = observable_mask(world, start)
    total = int(np.count_nonzero(mask))
    if total == 0:
        return 0.0
    return int(np.count_nonzero(grid.cells[mask])) / total
