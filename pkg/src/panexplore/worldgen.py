"""Seeded synthetic worlds and start-pose sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .worldsim import FACE, FREE, OCCUPIED, GroundTruthWorld, Pose, cell_center

KINDS = ("open-hall", "rooms", "corridor-tree")


@dataclass(frozen=True)
class Skeleton:
    """Junction lattice of a corridor-tree world.

    ``origins[k]`` is the lower corner of junction square ``k`` and ``edges``
    the corridors of the spanning tree, as index pairs into ``origins``.
    """
    origins: tuple[tuple[int, int], ...]
    edges: tuple[tuple[int, int], ...]
    width: int

    def degree(self) -> list[int]:
        deg = [0] * len(self.origins)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg


def _sealed_box(X: int, Y: int) -> np.ndarray:
    if X < 3 or Y < 3:
        raise ConfigError(f"dims {X}x{Y} are too small to seal (need >= 3x3)")
    cells = np.full((X, Y, 1), OCCUPIED, dtype=np.uint8)
    return cells


def open_hall(X: int, Y: int) -> np.ndarray:
    cells = _sealed_box(X, Y)
    cells[1:-1, 1:-1, 0] = FREE
    return cells


def rooms(X: int, Y: int, rng: np.random.Generator, min_room: int = 4, door: int = 2) -> np.ndarray:
    """Recursive division: split free regions with walls pierced by one doorway each.

    Walls sit on even coordinates and doorways on odd ones, so a later wall can
    never seal an earlier doorway.
    """
    cells = open_hall(X, Y)

    def divide(x0: int, y0: int, x1: int, y1: int) -> None:
        # Free region is [x0, x1] x [y0, y1] inclusive.
        w, h = x1 - x0 + 1, y1 - y0 + 1
        can_v = w >= 2 * min_room + 1
        can_h = h >= 2 * min_room + 1
        if not (can_v or can_h):
            return
        vertical = can_v and (not can_h or w > h or (w == h and rng.random() < 0.5))
        if vertical:
            xs = [x for x in range(x0 + min_room, x1 - min_room + 1) if x % 2 == 0]
            if not xs:
                return
            wx = int(rng.choice(xs))
            cells[wx, y0:y1 + 1, 0] = OCCUPIED
            ys = [y for y in range(y0, y1 - door + 2) if y % 2 == 1]
            dy = int(rng.choice(ys)) if ys else y0
            cells[wx, dy:dy + door, 0] = FREE
            divide(x0, y0, wx - 1, y1)
            divide(wx + 1, y0, x1, y1)
        else:
            ys = [y for y in range(y0 + min_room, y1 - min_room + 1) if y % 2 == 0]
            if not ys:
                return
            wy = int(rng.choice(ys))
            cells[x0:x1 + 1, wy, 0] = OCCUPIED
            xs = [x for x in range(x0, x1 - door + 2) if x % 2 == 1]
            dx = int(rng.choice(xs)) if xs else x0
            cells[dx:dx + door, wy, 0] = FREE
            divide(x0, y0, x1, wy - 1)
            divide(x0, wy + 1, x1, y1)

    divide(1, 1, X - 2, Y - 2)
    return cells


def corridor_skeleton(X: int, Y: int, rng: np.random.Generator, spacing: int, width: int) -> Skeleton:
    nx = (X - 2 - width) // spacing + 1
    ny = (Y - 2 - width) // spacing + 1
    if nx < 1 or ny < 1 or nx * ny < 2:
        raise ConfigError(f"dims {X}x{Y} too small for corridor spacing {spacing}")
    origins = tuple((1 + i * spacing, 1 + j * spacing) for i in range(nx) for j in range(ny))
    edges = []
    for i in range(nx):
        for j in range(ny):
            k = i * ny + j
            if i + 1 < nx:
                edges.append((k, (i + 1) * ny + j))
            if j + 1 < ny:
                edges.append((k, k + 1))
    order = rng.permutation(len(edges))
    parent = list(range(len(origins)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree = []
    for e in order:
        a, b = edges[int(e)]
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            tree.append((a, b))
    return Skeleton(origins, tuple(sorted(tree)), width)


def carve_skeleton(X: int, Y: int, sk: Skeleton) -> np.ndarray:
    cells = _sealed_box(X, Y)
    w = sk.width
    for x, y in sk.origins:
        cells[x:x + w, y:y + w, 0] = FREE
    for a, b in sk.edges:
        (xa, ya), (xb, yb) = sk.origins[a], sk.origins[b]
        cells[min(xa, xb):max(xa, xb) + w, min(ya, yb):max(ya, yb) + w, 0] = FREE
    return cells


def corridor_tree(X: int, Y: int, rng: np.random.Generator, junctions: int = 3,
                  spacing: int = 6, width: int = 2, attempts: int = 200) -> tuple[np.ndarray, Skeleton]:
    """Random spanning tree over a junction lattice with at least ``junctions``
    junctions of degree >= 3."""
    for _ in range(attempts):
        sk = corridor_skeleton(X, Y, rng, spacing, width)
        if sum(d >= 3 for d in sk.degree()) >= junctions:
            return carve_skeleton(X, Y, sk), sk
    raise ConfigError(f"could not place {junctions} junctions in a {X}x{Y} corridor tree")


def gen_world(kind: str, dims: tuple[int, int], seed: int, *, resolution: float = 0.5,
              junctions: int = 3, spacing: int = 6, width: int = 2, min_room: int = 4,
              name: str | None = None) -> GroundTruthWorld:
    X, Y = dims
    rng = np.random.default_rng(seed)
    if kind == "open-hall":
        cells = open_hall(X, Y)
    elif kind == "rooms":
        cells = rooms(X, Y, rng, min_room=min_room)
    elif kind == "corridor-tree":
        cells, _ = corridor_tree(X, Y, rng, junctions=junctions, spacing=spacing, width=width)
    else:
        raise ConfigError(f"unknown world kind {kind!r}; expected one of {KINDS}")
    return GroundTruthWorld(cells, resolution, name or f"{kind}-{X}x{Y}-s{seed}")


def largest_free_component(world: GroundTruthWorld) -> np.ndarray:
    labels, n = ndimage.label(world.cells == FREE, structure=FACE)
    if n == 0:
        return np.zeros(world.dims, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    # Lowest label among equally large components, for determinism.
    return labels == int(np.argmax(sizes)) + 1


def sample_starts(world: GroundTruthWorld, n: int, seed: int,
                  max_draws_per_start: int = 10_000) -> list[Pose]:
    """``n`` distinct free-cell poses by seeded rejection sampling over the array,
    keeping only cells in the largest free component."""
    ok = largest_free_component(world)
    if int(ok.sum()) < n:
        raise ConfigError(f"world {world.name!r} has {int(ok.sum())} usable free cells, need {n}")
    rng = np.random.default_rng(seed)
    X, Y, Z = world.dims
    chosen: list[tuple[int, int, int]] = []
    seen = set()
    draws = 0
    while len(chosen) < n:
        draws += 1
        if draws > max_draws_per_start * n:
            raise ConfigError("start sampling did not converge")
        c = (int(rng.integers(X)), int(rng.integers(Y)), int(rng.integers(Z)))
        if c in seen or not ok[c]:
            continue
        seen.add(c)
        chosen.append(c)
    yaws = rng.uniform(-math.pi, math.pi, size=n)
    return [Pose(cell_center(c, world.resolution), float(y)) for c, y in zip(chosen, yaws)]
