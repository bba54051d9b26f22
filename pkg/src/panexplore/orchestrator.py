"""Exploration state machine: PLAN -> (PAN) -> SELECT -> EXECUTE, with recovery.

Time is simulated.  Motion is charged at ``translation_speed``, each pan at
``2*pi / yaw_rate``, and planning/selection at configured constants, all in
integer ticks so the clock identity holds exactly after every transition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .decision import (Branch, Commit, Policy, ReachableVicinitySet, Recover, decision_gate,
                       execute_pan, match_frontier_views, model_select, render_map_slab,
                       select_nfp, vicinity_filter)
from .decision.pan import DEFAULT_FRAME_COUNT, PanFrame
from .errors import ConfigError, DataIntegrityError
from .frontier import (DEFAULT_CLEARANCE, Frontier, FrontierSet, find_frontiers, frontier_mask,
                       unknown_neighbors)
from .memory import (SelectionTree, backtrack_target, mark_resolved, record_decision,
                     resolve_everywhere)
from .metrics import CoverageCurve, EpisodeClock, EpisodeMetrics
from .planner import PlannedPath, path_cost_field, plan_path, viewpoint_cost
from .worldsim import (OCCUPIED, TWO_PI, UNKNOWN, GroundTruthWorld, OccupancyGrid, Pose,
                       SensorConfig, cell_center, cell_of, coverage, integrate_scan,
                       observable_mask, scan)

RECENT_TRACE = 60


@dataclass(frozen=True)
class EpisodeConfig:
    policy: Policy = Policy.NFP
    r_v: float = math.inf
    translation_speed: float = 1.0
    yaw_rate: float = math.pi / 4
    sensor: SensorConfig = field(default_factory=SensorConfig)
    frame_count: int = DEFAULT_FRAME_COUNT
    stride: int = 1
    diagonal: bool = True
    clearance: float = DEFAULT_CLEARANCE
    # Simulated compute charges, seconds.
    compute_plan: float = 0.05
    compute_per_candidate: float = 0.01
    compute_select: float = 0.01
    compute_model_call: float = 1.0
    max_cycles: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.translation_speed > 0:
            raise ConfigError("translation_speed must be positive")
        if not self.yaw_rate > 0:
            raise ConfigError("yaw_rate must be positive")
        if not self.r_v > 0:
            raise ConfigError("r_v must be positive or unbounded")
        if self.frame_count < 4:
            raise ConfigError("frame_count must be >= 4")
        if self.stride < 1 or self.max_cycles < 1:
            raise ConfigError("stride and max_cycles must be >= 1")
        if min(self.compute_plan, self.compute_per_candidate, self.compute_select,
               self.compute_model_call) < 0:
            raise ConfigError("compute charges must be nonnegative")

    @property
    def pan_duration(self) -> float:
        return TWO_PI / self.yaw_rate


@dataclass
class EpisodeTrace:
    positions: list[tuple[float, float, float]] = field(default_factory=list)
    pan_events: list[tuple[tuple[float, float, float], float]] = field(default_factory=list)
    decisions: list[tuple[int | None, dict]] = field(default_factory=list)
    gate_outcomes: list[str] = field(default_factory=list)
    distance: float = 0.0

    def move_to(self, position: tuple[float, float, float]) -> float:
        step = math.dist(self.positions[-1], position)
        self.positions.append(position)
        self.distance += step
        return step


class AdvanceResult(NamedTuple):
    pose: Pose
    integrations: int
    distance: float
    newly_known: int
    halted: bool


def _heading(a: Sequence[float], b: Sequence[float], default: float) -> float:
    dx, dy = b[0] - a[0], b[1] - a[1]
    return math.atan2(dy, dx) if (dx or dy) else default


def advance_and_sense(world: GroundTruthWorld, grid: OccupancyGrid, path: PlannedPath,
                      stride: int = 1, *, sensor: SensorConfig | None = None, yaw: float = 0.0,
                      on_scan: Callable[[float, int], None] | None = None,
                      on_move: Callable[[tuple[float, float, float]], None] | None = None,
                      still_valid: Callable[[], bool] | None = None) -> AdvanceResult:
    """Fly ``path`` waypoint by waypoint, scanning forward every ``stride`` cells.

    The robot faces its direction of travel.  Scans are taken at waypoint
    indices divisible by ``stride`` and at the final waypoint.  Execution halts
    at the current waypoint once a scan reveals an Occupied cell on the rest of
    the path, or once ``still_valid`` reports the target is gone.
    """
    sensor = sensor or SensorConfig()
    wps = path.waypoints
    cells = [cell_of(w, grid.resolution) for w in wps]
    pose = Pose(wps[0], _heading(wps[0], wps[1], yaw) if len(wps) > 1 else yaw)
    travelled = 0.0
    integrations = 0
    newly = 0
    last = len(wps) - 1
    for i, wp in enumerate(wps):
        if i > 0:
            travelled += math.dist(wps[i - 1], wp)
            pose = Pose(wp, _heading(wps[i - 1], wp, pose.yaw))
            if on_move is not None:
                on_move(wp)
        if i % stride == 0 or i == last:
            _, new = integrate_scan(grid, world, scan(world, pose, sensor))
            integrations += 1
            newly += new
            if on_scan is not None:
                on_scan(travelled, new)
            if i < last:
                blocked = any(grid.cells[c] == OCCUPIED for c in cells[i + 1:])
                if blocked or (still_valid is not None and not still_valid()):
                    return AdvanceResult(pose, integrations, travelled, newly, True)
    return AdvanceResult(pose, integrations, travelled, newly, False)


class EpisodeResult(NamedTuple):
    trace: EpisodeTrace
    curve: CoverageCurve
    metrics: EpisodeMetrics
    transitions: list[dict]
    tree: SelectionTree


class Explorer:
    """One exploration episode.  Owns its belief grid; not shared across threads."""

    def __init__(self, world: GroundTruthWorld, start: Pose, config: EpisodeConfig,
                 selector_endpoint=None, *, map_id: str | None = None, method_id: str = "",
                 run_id: int = 0):
        start_cell = cell_of(start.position, world.resolution)
        if not world.is_free(start_cell):
            raise ConfigError(f"start {start.position} is not in free space")
        self.world = world
        self.config = config
        self.endpoint = selector_endpoint
        self.grid = OccupancyGrid.unknown_like(world)
        self.pose = Pose(cell_center(start_cell, world.resolution), start.yaw)
        self.start = self.pose
        self.mask = observable_mask(world, self.pose)
        self.clock = EpisodeClock()
        self.trace = EpisodeTrace(positions=[self.pose.position])
        self.curve = CoverageCurve()
        self.tree = SelectionTree()
        self.frontiers = FrontierSet()
        self.transitions: list[dict] = []
        self.cycles = 0
        self.done = False
        self.aborted = False
        self.complete = False
        self.rejections: list[str] = []
        self.map_id = map_id if map_id is not None else world.name
        self.method_id = method_id
        self.run_id = run_id
        self._pending_frames: list[PanFrame] | None = None

    # -- bookkeeping -------------------------------------------------------

    def _sample(self) -> None:
        self.curve.add(self.trace.distance, coverage(self.grid, self.world, self.start, self.mask))

    def _sense(self, pose: Pose) -> int:
        _, new = integrate_scan(self.grid, self.world, scan(self.world, pose, self.config.sensor))
        self._sample()
        return new

    def _transition(self, state: str, gate: str | None = None, **extra) -> None:
        if not self.clock.identity_holds():
            raise DataIntegrityError(f"clock identity broken after {state}: {self.clock}")
        entry = {"state": state, "t": self.clock.elapsed, "cycle": self.cycles,
                 "pose": [*self.pose.position, self.pose.yaw], "gate": gate,
                 "exec": self.clock.exec, "pan": self.clock.pan, "compute": self.clock.compute}
        entry.update(extra)
        self.transitions.append(entry)

    def _replan(self) -> ReachableVicinitySet:
        cfg = self.config
        self.frontiers = find_frontiers(self.grid, self.frontiers, clearance=cfg.clearance)
        V = vicinity_filter(self.frontiers, self.pose, cfg.r_v, self.grid, diagonal=cfg.diagonal,
                            timestamp=self.cycles)
        self.clock.charge_compute(cfg.compute_plan + cfg.compute_per_candidate * V.candidates_checked)
        return V

    # -- FSM ---------------------------------------------------------------

    def begin(self) -> None:
        self._sense(self.pose)
        self._transition("START")

    def run(self) -> EpisodeResult:
        if not self.transitions:
            self.begin()
        while not self.done:
            if self.cycles >= self.config.max_cycles:
                self.aborted = True
                self.done = True
                self._transition("ABORT")
                break
            self.step()
        return self.result()

    def step(self) -> None:
        """One PLAN cycle and whatever it leads to."""
        self.cycles += 1
        V = self._replan()
        outcome = decision_gate(V)
        kind = type(outcome).__name__
        self.trace.gate_outcomes.append(kind)
        self._transition("PLAN", kind, n_frontiers=len(self.frontiers), n_vicinity=len(V))
        match outcome:
            case Commit(frontier=f):
                resolve_everywhere(self.tree, f.id)
                self._execute_to(f)
            case Branch(vicinity=V):
                self._branch(V)
            case Recover():
                self._recover()

    def _branch(self, V: ReachableVicinitySet) -> None:
        cfg = self.config
        frames = None
        if cfg.policy.pans:
            frames, _, duration = execute_pan(self.world, self.grid, self.pose, cfg.yaw_rate,
                                              cfg.frame_count, cfg.sensor, V.members)
            self.clock.charge_pan(duration)
            self.trace.pan_events.append((self.pose.position, duration))
            self._sample()
            self._transition("PAN", new_cells=sum(fr.newly_known for fr in frames))
            # The pan changed the map: refresh the candidates before choosing.
            V = self._replan()
            if len(V) == 0:
                return
            if len(V) == 1:
                f = V.members[0]
                resolve_everywhere(self.tree, f.id)
                self._transition("SELECT", chosen=f.id)
                self._execute_to(f)
                return
        decision, node_id = self._select(V, frames)
        f = next(m for m in V.members if m.id == decision.selected_frontier_id)
        self._execute_to(f)

    def _select(self, V: ReachableVicinitySet, frames: list[PanFrame] | None):
        cfg = self.config
        self.clock.charge_compute(cfg.compute_select)
        rejection = None
        if cfg.policy.uses_model:
            match = match_frontier_views(V.members, frames, self.pose) if frames else None
            slab = None
            if cfg.policy is Policy.MODEL_V:
                slab = render_map_slab(self.grid, self.pose, self.trace.positions[-RECENT_TRACE:],
                                       V.members, self._decision_points())
            decision, rejection = model_select(V, match, slab, self.pose, cfg.policy, self.endpoint)
            if self.endpoint is not None:
                self.clock.charge_compute(cfg.compute_model_call)
            if rejection is not None:
                self.rejections.append(rejection)
        else:
            decision = select_nfp(V, cfg.policy)
        node_id = record_decision(self.tree, self.pose, V.ids(), decision.selected_frontier_id)
        resolve_everywhere(self.tree, decision.selected_frontier_id)
        self.trace.decisions.append((node_id, {
            "selected_frontier_id": decision.selected_frontier_id,
            "confidence": decision.confidence,
            "policy": decision.policy.name,
            "available": V.ids(),
            "rejection": rejection,
        }))
        self._transition("SELECT", chosen=decision.selected_frontier_id, node=node_id)
        return decision, node_id

    def _decision_points(self):
        return [(n.pose.position, n.exhausted) for n in self.tree.nodes.values()]

    def _recover(self) -> None:
        cfg = self.config
        live = self.frontiers.ids()
        target = backtrack_target(self.tree, live)
        if not live:
            self.done = self.complete = True
            self._transition("DONE")
            return
        self.clock.charge_compute(cfg.compute_select)
        if target is not None:
            node = self.tree.node(target.node_id)
            self.tree.set_current(node.node_id)
            here = cell_of(self.pose.position, self.grid.resolution)
            there = cell_of(node.pose.position, self.grid.resolution)
            if here != there:
                path = plan_path(self.grid, self.pose, node.pose, diagonal=cfg.diagonal)
                if path is not None:
                    self._transition("RECOVER", node=node.node_id, hops=target.hops)
                    self._advance(path, None)
                    return
            field = path_cost_field(self.grid, self.pose, diagonal=cfg.diagonal)
            costs = []
            for fid in target.alternatives:
                f = self.frontiers.get(fid)
                c = viewpoint_cost(field, f, self.grid.resolution)
                if math.isfinite(c):
                    costs.append((c, fid))
                else:
                    mark_resolved(self.tree, node.node_id, fid)
            if not costs:
                self._transition("RECOVER", node=node.node_id, hops=target.hops)
                return
            _, fid = min(costs)
            resolve_everywhere(self.tree, fid)
            self._transition("RECOVER", node=node.node_id, hops=target.hops, chosen=fid)
            self._execute_to(self.frontiers.get(fid))
            return
        # No branch memory left to revisit, but frontiers remain beyond the
        # vicinity: relay to the cheapest reachable one anywhere.
        V = vicinity_filter(self.frontiers, self.pose, math.inf, self.grid, diagonal=cfg.diagonal)
        self.clock.charge_compute(cfg.compute_per_candidate * V.candidates_checked)
        if len(V) == 0:
            self.done = True
            self._transition("DONE", unreachable=len(live))
            return
        f = V.members[[m.id for m in V.members].index(select_nfp(V).selected_frontier_id)]
        resolve_everywhere(self.tree, f.id)
        self._transition("RECOVER", node=None, chosen=f.id)
        self._execute_to(f)

    def _advance(self, path: PlannedPath, target: Frontier | None) -> AdvanceResult:
        cfg = self.config
        d0 = self.trace.distance

        def on_scan(_travelled: float, _new: int) -> None:
            self._sample()

        still_valid = None
        if target is not None:
            cells = target.cells

            def still_valid() -> bool:
                return bool(unknown_neighbors(cells, self.grid))

        res = advance_and_sense(self.world, self.grid, path, cfg.stride, sensor=cfg.sensor,
                                yaw=self.pose.yaw, on_scan=on_scan, on_move=self.trace.move_to,
                                still_valid=still_valid)
        self.pose = res.pose
        self.clock.charge_exec((self.trace.distance - d0) / cfg.translation_speed)
        self._transition("EXECUTE", distance=self.trace.distance - d0, halted=res.halted)
        return res

    def _execute_to(self, f: Frontier) -> None:
        cfg = self.config
        path = plan_path(self.grid, self.pose, f.viewpoint, diagonal=cfg.diagonal)
        if path is None:
            return
        res = self._advance(path, f)
        gained = res.newly_known
        if not res.halted:
            # Arrived: look toward the frontier.
            self.pose = self.pose.with_yaw(f.viewpoint.yaw)
            gained += self._sense(self.pose)
        if gained == 0:
            self._unstick(f)

    def _unstick(self, f: Frontier) -> None:
        """Nothing new was seen on the way to ``f``: step onto its cheapest frontier
        cell and face an Unknown neighbour across a cell face, which the centre
        ray is guaranteed to reveal."""
        cfg = self.config
        field = path_cost_field(self.grid, self.pose, diagonal=cfg.diagonal)
        fmask = frontier_mask(self.grid)
        best = None
        for c in f.cells:
            if not fmask[c] or not math.isfinite(field[c]):
                continue
            for d in ((1, 0), (0, 1), (-1, 0), (0, -1)):
                n = (c[0] + d[0], c[1] + d[1], c[2])
                if 0 <= n[0] < self.grid.dims[0] and 0 <= n[1] < self.grid.dims[1] \
                        and self.grid.cells[n] == UNKNOWN:
                    cand = (float(field[c]), c, math.atan2(d[1], d[0]))
                    if best is None or cand[:2] < best[:2]:
                        best = cand
                    break
        if best is None:
            return
        _, c, yaw = best
        goal = Pose(cell_center(c, self.grid.resolution), yaw)
        path = plan_path(self.grid, self.pose, goal, diagonal=cfg.diagonal)
        if path is None:
            return
        self._advance(path, None)
        self.pose = self.pose.with_yaw(yaw)
        self._sense(self.pose)

    # -- results -----------------------------------------------------------

    def result(self) -> EpisodeResult:
        metrics = EpisodeMetrics(
            map_id=self.map_id, method_id=self.method_id, run_id=self.run_id,
            distance=self.trace.distance, coverage=self.curve.final_coverage, clock=self.clock,
            pan_count=len(self.trace.pan_events), cycles=self.cycles, aborted=self.aborted)
        return EpisodeResult(self.trace, self.curve, metrics, self.transitions, self.tree)


def run_episode(world: GroundTruthWorld, start: Pose, config: EpisodeConfig,
                selector_endpoint=None, **ids) -> EpisodeResult:
    return Explorer(world, start, config, selector_endpoint, **ids).run()


def transitions_jsonl(transitions: list[dict]) -> str:
    return "".join(json.dumps(t, sort_keys=True) + "\n" for t in transitions)
