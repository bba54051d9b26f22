"""In-place 360 degree pan and frontier-to-frame matching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

from ..frontier import Frontier
from ..worldsim import (OCCUPIED, TWO_PI, GroundTruthWorld, OccupancyGrid, Pose, SensorConfig,
                        cell_of, integrate_scan, scan, traverse, wrap_angle)

FRONTIER_VIEW_THRESHOLD = math.pi / 4
DEFAULT_FRAME_COUNT = 12


@dataclass(frozen=True)
class PanFrame:
    yaw: float
    unwrapped_yaw: float
    visible_frontier_ids: tuple[int, ...]
    newly_known: int


@dataclass(frozen=True)
class FrontierViewMatch:
    assignments: dict[int, int | None]
    errors: dict[int, float] = field(default_factory=dict)

    def alignment_score(self, fid: int, threshold: float = FRONTIER_VIEW_THRESHOLD) -> float | None:
        """``1 - error/threshold`` clamped to [0, 1]; None when unmatched."""
        if self.assignments.get(fid) is None:
            return None
        return min(1.0, max(0.0, 1.0 - self.errors[fid] / threshold))


def bearing_to(pose: Pose, point: Iterable[float]) -> float:
    px, py = list(point)[:2]
    return math.atan2(py - pose.position[1], px - pose.position[0])


def line_of_sight(world: GroundTruthWorld, pose: Pose, target: Iterable[float],
                  max_range: float) -> bool:
    target = tuple(target)
    d = math.dist(pose.position, target)
    if d > max_range:
        return False
    if d == 0:
        return True
    res = world.resolution
    goal = cell_of(target, res)
    direction = [(t - p) / d for t, p in zip(target, pose.position)]
    origin = [p / res for p in pose.position]
    for cell, _ in traverse(origin, direction, d / res, world.dims):
        if cell == goal:
            return True
        if world.cells[cell] == OCCUPIED:
            return False
    return True


def execute_pan(world: GroundTruthWorld, grid: OccupancyGrid, pose: Pose, yaw_rate: float,
                frame_count: int = DEFAULT_FRAME_COUNT, sensor: SensorConfig | None = None,
                frontiers: Iterable[Frontier] = ()) -> tuple[list[PanFrame], OccupancyGrid, float]:
    """Rotate once in place, scanning at ``frame_count`` uniform yaw steps.

    Every frame's scan is integrated into ``grid`` (mutated in place).  The
    robot ends where it started, at its starting yaw; the duration is
    ``2*pi / yaw_rate``.
    """
    if not yaw_rate > 0:
        raise ValueError("yaw_rate must be positive")
    if frame_count < 4:
        raise ValueError("a pan needs at least 4 frames")
    sensor = sensor or SensorConfig()
    frontiers = list(frontiers)
    step = TWO_PI / frame_count
    frames = []
    for i in range(frame_count):
        unwrapped = pose.yaw + i * step
        view = pose.with_yaw(unwrapped)
        _, new = integrate_scan(grid, world, scan(world, view, sensor))
        visible = tuple(
            f.id for f in frontiers
            if abs(wrap_angle(bearing_to(view, f.avg_position) - view.yaw)) <= sensor.fov / 2
            and line_of_sight(world, view, f.avg_position, sensor.max_range)
        )
        frames.append(PanFrame(view.yaw, unwrapped, visible, new))
    return frames, grid, TWO_PI / yaw_rate


def match_frontier_views(frontiers: Iterable[Frontier], frames: list[PanFrame], pose: Pose,
                         threshold: float = FRONTIER_VIEW_THRESHOLD) -> FrontierViewMatch:
    """Assign each frontier the frame with the smallest wrapped yaw error.

    Ties go to the earlier frame; a best error above ``threshold`` leaves the
    frontier unmatched.
    """
    if not frames:
        raise ValueError("no pan frames to match against")
    assignments: dict[int, int | None] = {}
    errors: dict[int, float] = {}
    for f in frontiers:
        b = bearing_to(pose, f.avg_position)
        best_i, best_e = 0, math.inf
        for i, fr in enumerate(frames):
            e = abs(wrap_angle(b - fr.yaw))
            if e < best_e:
                best_i, best_e = i, e
        errors[f.id] = best_e
        assignments[f.id] = best_i if best_e <= threshold else None
    return FrontierViewMatch(assignments, errors)
