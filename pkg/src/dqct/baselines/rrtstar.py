"""
RRT* over payload poses (x, y, heading).

Edges are straight lines in the plane with linearly interpolated heading.
The cost of an edge is its translation length plus the arc a bar end sweeps
while rotating, which is the same distance measure the lattice planner uses.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..geometry import Pose2, Vec2
from ..scenario import Scenario
from .common import PlanResult, configs_collide, infeasible, motion_heading, segment_rows


@dataclass(frozen=True)
class RRTConfig:
    goal_bias: float = 0.05
    step_size: float = 1.0
    max_turn: float = math.pi / 4
    check_spacing: float = 0.05
    # above the asymptotic-optimality threshold for a 10 m square with a bar-length heading axis
    rewire_gamma: float = 10.0
    goal_tolerance: float = 0.15
    margin: float = 0.05


def _edge_cost(dx: float, dy: float, dth: float, w: float) -> float:
    return math.hypot(dx, dy) + w * abs(dth)


def rrtstar_plan(scenario: Scenario, max_iterations: int = 2000, seed: int = 0, config: RRTConfig = RRTConfig()) -> PlanResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    w = 0.5 * scenario.payload_length
    reach = 0.5 * scenario.payload_length + math.hypot(scenario.robot_half_dims.x, scenario.robot_half_dims.y)
    x0, x1, y0, y1 = scenario.bounds()
    gx, gy = scenario.goal.x, scenario.goal.y

    n_max = max_iterations + 1
    xs = np.empty(n_max)
    ys = np.empty(n_max)
    ths = np.empty(n_max)
    cost = np.empty(n_max)
    parent = np.full(n_max, -1, dtype=np.int64)
    heads = np.empty(n_max)
    children: list[set] = [set()]
    xs[0], ys[0], ths[0], cost[0] = scenario.start.x, scenario.start.y, scenario.start_heading, 0.0
    heads[0] = scenario.start_heading
    n = 1

    start_row = np.array([[xs[0], ys[0], ths[0], heads[0], heads[0]]])
    if configs_collide(scenario, start_row)[0]:
        return infeasible("rrtstar", time.perf_counter() - t0, 0)

    def edge_free(i: int, x: float, y: float, th: float) -> bool:
        rows = segment_rows(xs[i], ys[i], ths[i], x, y, th, config.check_spacing, reach)
        return not configs_collide(scenario, rows, config.margin).any()

    def propagate(i: int, delta: float) -> None:
        stack = list(children[i])
        while stack:
            c = stack.pop()
            cost[c] -= delta
            stack.extend(children[c])

    goal_nodes: list[int] = []
    if math.hypot(xs[0] - gx, ys[0] - gy) < config.goal_tolerance:
        goal_nodes.append(0)

    for _ in range(max_iterations):
        if rng.random() < config.goal_bias:
            sx, sy = gx, gy
            sth = rng.uniform(-math.pi, math.pi)
        else:
            sx = rng.uniform(x0, x1)
            sy = rng.uniform(y0, y1)
            sth = rng.uniform(-math.pi, math.pi)

        dxs = xs[:n] - sx
        dys = ys[:n] - sy
        dths = np.abs(np.remainder(ths[:n] - sth + math.pi, 2.0 * math.pi) - math.pi)
        near_i = int(np.argmin(np.hypot(dxs, dys) + w * dths))

        # steer from the nearest node toward the sample
        dx, dy = sx - xs[near_i], sy - ys[near_i]
        dth = math.remainder(sth - ths[near_i], 2.0 * math.pi)
        dist = math.hypot(dx, dy)
        scale = 1.0
        if dist > config.step_size:
            scale = config.step_size / dist
        if abs(dth) * scale > config.max_turn:
            scale = config.max_turn / abs(dth)
        nx, ny, nth = xs[near_i] + scale * dx, ys[near_i] + scale * dy, ths[near_i] + scale * dth
        if not edge_free(near_i, nx, ny, nth):
            continue

        radius = min(config.rewire_gamma * (math.log(n + 1) / (n + 1)) ** (1.0 / 3.0), 2.0 * config.step_size)
        d_all = np.hypot(xs[:n] - nx, ys[:n] - ny)
        dth_all = np.abs(np.remainder(ths[:n] - nth + math.pi, 2.0 * math.pi) - math.pi)
        metric = d_all + w * dth_all
        nbrs = np.nonzero(metric <= radius)[0]

        best_parent = near_i
        best_cost = cost[near_i] + _edge_cost(nx - xs[near_i], ny - ys[near_i], nth - ths[near_i], w)
        order = nbrs[np.argsort(cost[nbrs] + metric[nbrs], kind="stable")]
        for j in order:
            j = int(j)
            if j == near_i:
                continue
            c = cost[j] + _edge_cost(nx - xs[j], ny - ys[j], math.remainder(nth - ths[j], 2 * math.pi), w)
            if c < best_cost and edge_free(j, nx, ny, nth):
                best_parent, best_cost = j, c

        k = n
        xs[k], ys[k], ths[k], cost[k] = nx, ny, nth, best_cost
        parent[k] = best_parent
        heads[k] = motion_heading(nx - xs[best_parent], ny - ys[best_parent], nth)
        children.append(set())
        children[best_parent].add(k)
        n += 1

        for j in nbrs:
            j = int(j)
            if j == best_parent or j == 0:
                continue
            c = best_cost + _edge_cost(xs[j] - nx, ys[j] - ny, math.remainder(ths[j] - nth, 2 * math.pi), w)
            if c < cost[j] and _rewire_free(scenario, config, reach, nx, ny, nth, xs[j], ys[j], ths[j]):
                children[parent[j]].discard(j)
                parent[j] = k
                children[k].add(j)
                heads[j] = motion_heading(xs[j] - nx, ys[j] - ny, ths[j])
                delta = cost[j] - c
                cost[j] = c
                propagate(j, delta)

        if math.hypot(nx - gx, ny - gy) < config.goal_tolerance:
            goal_nodes.append(k)

    elapsed = time.perf_counter() - t0
    if not goal_nodes:
        return infeasible("rrtstar", elapsed, max_iterations)
    best = min(goal_nodes, key=lambda i: (cost[i], i))
    chain = []
    i = best
    while i != -1:
        chain.append(i)
        i = parent[i]
    chain.reverse()
    waypoints = [Pose2(Vec2(xs[i], ys[i]), ths[i]) for i in chain]
    robot_headings = [(heads[i], heads[i]) for i in chain]
    return PlanResult(waypoints, float(cost[best]), elapsed, True, max_iterations, robot_headings, "rrtstar")


def _rewire_free(scenario, config, reach, x0, y0, th0, x1, y1, th1) -> bool:
    rows = segment_rows(x0, y0, th0, x1, y1, th1, config.check_spacing, reach)
    return not configs_collide(scenario, rows, config.margin).any()
