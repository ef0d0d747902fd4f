"""
A* over an (x, y, heading) lattice anchored at the start pose.

Translations are 8-connected grid moves and rotations step one heading bin,
so every primitive lands exactly on the lattice. Edge costs are path
lengths (translation distance, or the arc swept by a bar end for rotation)
stored as integer micrometres; this keeps the optimum exact and lets A* and
the Dijkstra oracle be compared with ``==``.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from ..geometry import Pose2, Vec2
from ..scenario import Scenario
from .common import PlanResult, configs_collide, infeasible, motion_heading

COST_UNIT = 1e-6


@dataclass(frozen=True)
class MotionPrimitive:
    di: int
    dj: int
    dk: int
    cost: float  # meters

    @property
    def is_rotation(self) -> bool:
        return self.di == 0 and self.dj == 0


def default_primitives(resolution: float, heading_bins: int, payload_length: float) -> tuple[MotionPrimitive, ...]:
    straight = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    diagonal = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    turn = 0.5 * payload_length * (2.0 * math.pi / heading_bins)
    prims = [MotionPrimitive(i, j, 0, resolution) for i, j in straight]
    prims += [MotionPrimitive(i, j, 0, resolution * math.sqrt(2.0)) for i, j in diagonal]
    prims += [MotionPrimitive(0, 0, 1, turn), MotionPrimitive(0, 0, -1, turn)]
    return tuple(prims)


@dataclass(frozen=True)
class LatticeConfig:
    xy_resolution: float = 0.25
    heading_bins: int = 24
    motion_primitives: tuple[MotionPrimitive, ...] | None = None
    goal_tolerance: float = 0.15
    # clearance kept from walls so the projected execution is not wedged
    margin: float = 0.05
    max_expansions: int = 2_000_000

    def __post_init__(self):
        if self.xy_resolution <= 0.0 or self.heading_bins < 4:
            raise ValueError("lattice resolution must be positive and heading_bins >= 4")

    def primitives(self, scenario: Scenario) -> tuple[MotionPrimitive, ...]:
        if self.motion_primitives is not None:
            return self.motion_primitives
        return default_primitives(self.xy_resolution, self.heading_bins, scenario.payload_length)

    def effective_goal_tolerance(self) -> float:
        # some lattice cell must fall inside the goal disc
        return max(self.goal_tolerance, self.xy_resolution / math.sqrt(2.0) + 1e-9)


class _Lattice:
    def __init__(self, scenario: Scenario, config: LatticeConfig):
        self.s = scenario
        self.cfg = config
        self.res = config.xy_resolution
        self.nk = config.heading_bins
        self.dth = 2.0 * math.pi / self.nk
        self.prims = config.primitives(scenario)
        self.costs = [math.ceil(p.cost / COST_UNIT - 1e-9) for p in self.prims]
        x0, x1, y0, y1 = scenario.bounds()
        sx, sy = scenario.start.x, scenario.start.y
        self.i_range = (math.floor((x0 - sx) / self.res), math.ceil((x1 - sx) / self.res))
        self.j_range = (math.floor((y0 - sy) / self.res), math.ceil((y1 - sy) / self.res))
        self.tol = config.effective_goal_tolerance()

    def pose(self, i: int, j: int, k: int) -> tuple[float, float, float]:
        s = self.s
        return s.start.x + i * self.res, s.start.y + j * self.res, s.start_heading + k * self.dth

    def goal_distance(self, i: int, j: int) -> float:
        x, y, _ = self.pose(i, j, 0)
        return math.hypot(x - self.s.goal.x, y - self.s.goal.y)

    def heuristic(self, i: int, j: int) -> int:
        return math.floor(max(0.0, self.goal_distance(i, j) - self.tol) / COST_UNIT)

    def successors(self, i: int, j: int, k: int):
        """Collision-free neighbours with their integer costs and robot headings."""
        x, y, th = self.pose(i, j, k)
        rows = []
        cand = []
        for p, c in zip(self.prims, self.costs):
            ni, nj, nk = i + p.di, j + p.dj, (k + p.dk) % self.nk
            if not (self.i_range[0] <= ni <= self.i_range[1] and self.j_range[0] <= nj <= self.j_range[1]):
                continue
            nx, ny, nth = self.pose(ni, nj, k + p.dk)
            h = nth if p.is_rotation else motion_heading(nx - x, ny - y, th)
            mid_th = th + 0.5 * p.dk * self.dth
            mh = mid_th if p.is_rotation else h
            rows.append((nx, ny, nth, h, h))
            rows.append((0.5 * (x + nx), 0.5 * (y + ny), mid_th, mh, mh))
            cand.append(((ni, nj, nk), c, h))
        if not rows:
            return []
        hit = configs_collide(self.s, np.array(rows), self.cfg.margin)
        return [cand[n] for n in range(len(cand)) if not (hit[2 * n] or hit[2 * n + 1])]


def _search(scenario: Scenario, config: LatticeConfig, use_heuristic: bool, method: str) -> PlanResult:
    t0 = time.perf_counter()
    lat = _Lattice(scenario, config)
    start = (0, 0, 0)
    start_row = np.array([[scenario.start.x, scenario.start.y, scenario.start_heading, scenario.start_heading, scenario.start_heading]])
    if configs_collide(scenario, start_row)[0]:
        return infeasible(method, time.perf_counter() - t0, 0)
    if any(b.contains(scenario.goal) for b in scenario.boundaries):
        return infeasible(method, time.perf_counter() - t0, 0)

    h0 = lat.heuristic(0, 0) if use_heuristic else 0
    g = {start: 0}
    parent: dict = {start: None}
    heads = {start: (scenario.start_heading, scenario.start_heading)}
    heap = [(h0, 0, 0, start)]
    counter = 1
    expansions = 0
    goal_state = None
    while heap:
        _, gc, _, node = heapq.heappop(heap)
        if gc > g[node]:
            continue
        if lat.goal_distance(node[0], node[1]) <= lat.tol:
            goal_state = node
            break
        expansions += 1
        if expansions > config.max_expansions:
            break
        for nb, c, h in lat.successors(*node):
            ng = gc + c
            if ng < g.get(nb, math.inf):
                g[nb] = ng
                parent[nb] = node
                heads[nb] = (h, h)
                f = ng + (lat.heuristic(nb[0], nb[1]) if use_heuristic else 0)
                heapq.heappush(heap, (f, ng, counter, nb))
                counter += 1
    if goal_state is None:
        return infeasible(method, time.perf_counter() - t0, expansions)

    chain = []
    node = goal_state
    while node is not None:
        chain.append(node)
        node = parent[node]
    chain.reverse()
    waypoints = []
    robot_headings = []
    for n in chain:
        x, y, th = lat.pose(*n)
        waypoints.append(Pose2(Vec2(x, y), th))
        robot_headings.append(heads[n])
    last = waypoints[-1]
    # finish exactly on the goal when the short connector is clear
    gap = (scenario.goal - last.position).norm()
    if gap > 1e-12:
        h = motion_heading(scenario.goal.x - last.position.x, scenario.goal.y - last.position.y, last.heading)
        row = np.array([[scenario.goal.x, scenario.goal.y, last.heading, h, h]])
        if not configs_collide(scenario, row, config.margin)[0]:
            waypoints.append(Pose2(scenario.goal, last.heading))
            robot_headings.append((h, h))
    return PlanResult(
        waypoints,
        g[goal_state] * COST_UNIT,
        time.perf_counter() - t0,
        True,
        expansions,
        robot_headings,
        method,
    )


def astar_plan(scenario: Scenario, config: LatticeConfig = LatticeConfig()) -> PlanResult:
    return _search(scenario, config, True, "astar")


def dijkstra_plan(scenario: Scenario, config: LatticeConfig = LatticeConfig()) -> PlanResult:
    """Uniform-cost search on the same lattice; the optimality oracle for A*."""
    return _search(scenario, config, False, "dijkstra")


def coarse_feasible(scenario: Scenario) -> bool:
    return astar_plan(scenario, LatticeConfig(margin=0.02)).feasible
