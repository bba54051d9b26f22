"""Reachable-vicinity filtering and the cardinality gate."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError
from ..frontier import Frontier, FrontierSet
from ..planner import path_cost_field, viewpoint_cost
from ..worldsim import OccupancyGrid, Pose

UNBOUNDED = math.inf


@dataclass(frozen=True)
class ReachableVicinitySet:
    radius: float
    members: tuple[Frontier, ...]
    timestamp: int = 0
    # Number of frontiers that passed the distance test and were checked for
    # admissibility; drives the simulated compute charge.
    candidates_checked: int = 0

    def __len__(self) -> int:
        return len(self.members)

    def ids(self) -> list[int]:
        return [f.id for f in self.members]

    def costs(self) -> dict[int, float]:
        return {f.id: f.planner_cost for f in self.members}  # type: ignore[misc]


def within_radius(f: Frontier, pose: Pose, r_v: float) -> bool:
    if math.isinf(r_v):
        return True
    return math.dist(f.avg_position, pose.position) <= r_v


def vicinity_filter(frontiers: FrontierSet, pose: Pose, r_v: float, grid: OccupancyGrid, *,
                    diagonal: bool = False, timestamp: int = 0) -> ReachableVicinitySet:
    """Frontiers within ``r_v`` of the robot whose viewpoint is reachable.

    ``r_v = math.inf`` drops the distance test.  One single-source cost field
    from the robot answers every admissibility query of the cycle; members
    carry their planner cost and are ordered by frontier ID.
    """
    if not r_v > 0:
        raise ConfigError(f"vicinity radius must be positive, got {r_v}")
    near = [f for f in frontiers if within_radius(f, pose, r_v)]
    members = []
    if near:
        field = path_cost_field(grid, pose, diagonal=diagonal)
        for f in near:
            cost = viewpoint_cost(field, f, grid.resolution)
            if np.isfinite(cost):
                members.append(replace(f, planner_cost=cost))
    members.sort(key=lambda f: f.id)
    return ReachableVicinitySet(r_v, tuple(members), timestamp, len(near))


@dataclass(frozen=True)
class Recover:
    pass


@dataclass(frozen=True)
class Commit:
    frontier: Frontier


@dataclass(frozen=True)
class Branch:
    vicinity: ReachableVicinitySet


def decision_gate(V: ReachableVicinitySet) -> Recover | Commit | Branch:
    n = len(V)
    if n == 0:
        return Recover()
    if n == 1:
        return Commit(V.members[0])
    return Branch(V)
