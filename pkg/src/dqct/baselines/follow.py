"""Pure-pursuit tracking of planned payload waypoints."""

from __future__ import annotations

import math

from ..geometry import Vec2, normalize_angle
from ..kinematics import KinematicLimits, PayloadTwist, TeamState, twist_to_robot_velocities
from ..lowlevel import TeamAction, ZERO_ACTION
from .common import PlanResult

LOOKAHEAD = 0.3


def _clip(v: float, bound: float) -> float:
    return min(max(v, -bound), bound)


def _closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> tuple[float, float]:
    """(parameter in [0, 1], distance) of the point of ``ab`` closest to ``p``."""
    ab = b - a
    denom = ab.dot(ab)
    s = 0.0 if denom == 0.0 else min(max((p - a).dot(ab) / denom, 0.0), 1.0)
    q = a + ab * s
    return s, (p - q).norm()


class PathFollower:
    """Stateful pursuit controller; progress along the path never moves backwards."""

    def __init__(
        self,
        plan: PlanResult,
        limits: KinematicLimits,
        lookahead: float = LOOKAHEAD,
        speed_gain: float = 1.5,
        heading_gain: float = 2.0,
        robot_gain: float = 3.0,
        search_window: int = 8,
        align_power: float = 8.0,
        min_align: float = 0.1,
    ):
        if not plan.feasible or not plan.waypoints:
            raise ValueError("cannot follow an infeasible plan")
        self.plan = plan
        self.limits = limits
        self.lookahead = lookahead
        self.speed_gain = speed_gain
        self.heading_gain = heading_gain
        self.robot_gain = robot_gain
        self.window = search_window
        self.align_power = align_power
        self.min_align = min_align
        self.index = 0
        self.pts = [w.position for w in plan.waypoints]
        self.headings = [w.heading for w in plan.waypoints]

    def _progress(self, x: Vec2) -> int:
        best, best_d = self.index, math.inf
        hi = min(len(self.pts) - 1, self.index + self.window)
        for i in range(self.index, max(hi, self.index + 1)):
            if i + 1 >= len(self.pts):
                break
            _, d = _closest_on_segment(x, self.pts[i], self.pts[i + 1])
            if d < best_d - 1e-12:
                best, best_d = i, d
        return best

    def _target(self, x: Vec2, seg: int) -> tuple[Vec2, float]:
        """Far crossing of the lookahead circle ahead of the closest point on segment ``seg``."""
        pts = self.pts
        if len(pts) == 1:
            return pts[0], self.headings[0]
        for i in range(seg, len(pts) - 1):
            a, b = pts[i], pts[i + 1]
            d = b - a
            qa = d.dot(d)
            if qa == 0.0:
                continue
            if (b - x).norm() < self.lookahead:
                continue
            s_min = _closest_on_segment(x, a, b)[0] if i == seg else 0.0
            f = a - x
            qb = 2.0 * f.dot(d)
            qc = f.dot(f) - self.lookahead**2
            disc = qb * qb - 4.0 * qa * qc
            # off the circle entirely: head back to the closest path point
            s = (-qb + math.sqrt(disc)) / (2.0 * qa) if disc >= 0.0 else s_min
            s = min(max(s, s_min), 1.0)
            th = self.headings[i] + s * normalize_angle(self.headings[i + 1] - self.headings[i])
            return a + d * s, th
        return pts[-1], self.headings[-1]

    def __call__(self, state: TeamState) -> TeamAction:
        x = state.payload.position
        self.index = self._progress(x)
        target, target_heading = self._target(x, self.index)
        end = self.pts[-1]
        v_cap = self.limits.v_max.x
        to_target = target - x
        dist = to_target.norm()
        speed = min(v_cap, self.speed_gain * (end - x).norm())
        if dist > 1e-12 and speed > 0.0:
            linear = to_target * (speed / dist)
            linear = Vec2(_clip(linear.x, v_cap), _clip(linear.y, v_cap))
        else:
            linear = Vec2(0.0, 0.0)
        w_max = self.limits.omega_max
        angular = _clip(self.heading_gain * normalize_angle(target_heading - state.payload.heading), w_max)
        twist = PayloadTwist(linear, angular)
        if linear.x == 0.0 and linear.y == 0.0 and angular == 0.0:
            return ZERO_ACTION

        rates, worst = [], 0.0
        for v, h in zip(twist_to_robot_velocities(twist, state.payload, state.length), state.robot_headings):
            if v.norm() < 1e-6:
                rates.append(0.0)
                continue
            phi = math.atan2(v.y, v.x)
            # walking backwards is as fast as forwards, so face whichever is closer
            err = normalize_angle(phi - h)
            if abs(err) > math.pi / 2:
                err = normalize_angle(phi + math.pi - h)
            worst = max(worst, abs(err))
            rates.append(_clip(self.robot_gain * err, w_max))
        # hold translation back until the robots face the new direction
        slow = max(self.min_align, math.cos(worst) ** self.align_power)
        twist = PayloadTwist(twist.linear * slow, twist.angular)
        return TeamAction(twist, (rates[0], rates[1]))


def follow(plan: PlanResult, state: TeamState, limits: KinematicLimits, lookahead: float = LOOKAHEAD) -> TeamAction:
    """Stateless single query: progress is searched over the whole path."""
    f = PathFollower(plan, limits, lookahead, search_window=len(plan.waypoints))
    return f(state)
