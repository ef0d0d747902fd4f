from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..collision import team_collides_many
from ..geometry import Pose2
from ..scenario import Scenario


@dataclass
class PlanResult:
    """Waypoints for the payload, with the robot headings assumed for each."""

    waypoints: list[Pose2]
    cost: float
    planning_time: float
    feasible: bool
    iterations: int
    robot_headings: list[tuple[float, float]] = field(default_factory=list)
    method: str = ""

    def path_length(self) -> float:
        pts = self.waypoints
        return sum(math.dist(pts[i].position.as_tuple(), pts[i + 1].position.as_tuple()) for i in range(len(pts) - 1))

    def to_records(self) -> list[dict]:
        """Trajectory-log records (``kind="plan"``), one per waypoint."""
        heads = self.robot_headings or [(w.heading, w.heading) for w in self.waypoints]
        return [
            {
                "kind": "plan",
                "method": self.method,
                "index": i,
                "payload": [w.position.x, w.position.y, w.heading],
                "robot_headings": list(h),
                "feasible": self.feasible,
                "cost": self.cost,
            }
            for i, (w, h) in enumerate(zip(self.waypoints, heads))
        ]


def infeasible(method: str, planning_time: float, iterations: int) -> PlanResult:
    return PlanResult([], math.inf, planning_time, False, iterations, method=method)


def configs_collide(scenario: Scenario, rows: np.ndarray, margin: float = 0.0) -> np.ndarray:
    """Collision flags for rows ``(px, py, th, h1, h2)``."""
    return team_collides_many(np.ascontiguousarray(rows, dtype=float), scenario.shape(), scenario.walls(margin))


def motion_heading(dx: float, dy: float, fallback: float) -> float:
    """Robot heading assumed while the payload translates by ``(dx, dy)``."""
    if math.hypot(dx, dy) < 1e-9:
        return fallback
    return math.atan2(dy, dx)


def segment_rows(
    x0: float, y0: float, th0: float, x1: float, y1: float, th1: float, spacing: float, reach: float
) -> np.ndarray:
    """Interpolated configurations along a straight SE(2) segment (endpoint included, start excluded).

    ``reach`` converts heading change to the arc length swept at the far
    end of the footprint, so rotations are sampled as densely as translations.
    """
    dth = math.remainder(th1 - th0, 2.0 * math.pi)
    dist = math.hypot(x1 - x0, y1 - y0)
    n = max(1, math.ceil(max(dist, abs(dth) * reach) / spacing))
    s = np.arange(1, n + 1) / n
    h = motion_heading(x1 - x0, y1 - y0, th1)
    rows = np.empty((n, 5))
    rows[:, 0] = x0 + s * (x1 - x0)
    rows[:, 1] = y0 + s * (y1 - y0)
    rows[:, 2] = th0 + s * dth
    rows[:, 3] = h if dist >= 1e-9 else rows[:, 2]
    rows[:, 4] = rows[:, 3]
    return rows
