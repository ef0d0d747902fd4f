"""
Lower-level velocity projection.

The upper level asks for a payload twist plus two robot heading rates. The
projector returns the largest uniform scaling ``alpha`` of that request such
that both robots stay inside their anisotropic velocity boxes and the team
footprint one control step ahead clears every (inflated) wall. Uniform
scaling keeps the endpoint velocities rigid-consistent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from numba import njit

from .collision import team_collides
from .geometry import Vec2
from .kinematics import PayloadTwist, TeamState, integrate, to_robot_frame, twist_to_robot_velocities

DEFAULT_DT = 0.1
DEFAULT_MARGIN = 0.02
ALPHA_TOL = 1e-3
MAX_BISECTIONS = 20


class LimitedBy(enum.Enum):
    NONE = "none"
    VELOCITY_BOX = "velocity_box"
    COLLISION = "collision"
    STUCK = "stuck"


class ProjectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class TeamAction:
    twist: PayloadTwist
    robot_rates: tuple[float, float]

    def scaled(self, alpha: float) -> TeamAction:
        return TeamAction(self.twist.scaled(alpha), (self.robot_rates[0] * alpha, self.robot_rates[1] * alpha))

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        t = self.twist
        return (t.linear.x, t.linear.y, t.angular, self.robot_rates[0], self.robot_rates[1])

    @classmethod
    def from_array(cls, a) -> TeamAction:
        return cls(PayloadTwist(Vec2(float(a[0]), float(a[1])), float(a[2])), (float(a[3]), float(a[4])))


ZERO_ACTION = TeamAction(PayloadTwist(Vec2(0.0, 0.0), 0.0), (0.0, 0.0))


@dataclass(frozen=True)
class ProjectionResult:
    applied_twist: PayloadTwist
    applied_rates: tuple[float, float]
    robot_velocities_world: tuple[Vec2, Vec2]
    robot_velocities_robot_frame: tuple[Vec2, Vec2]
    alpha: float
    alpha_velocity: float
    limited_by: LimitedBy
    objective: float
    # the state after integrating the applied action for dt
    next_state: TeamState | None = None

    @property
    def applied_action(self) -> TeamAction:
        return TeamAction(self.applied_twist, self.applied_rates)


def objective_value(desired_world: tuple[Vec2, Vec2], applied_world: tuple[Vec2, Vec2]) -> float:
    """Squared distance between stacked endpoint-velocity 4-vectors."""
    total = 0.0
    for d, a in zip(desired_world, applied_world):
        total += (d.x - a.x) ** 2 + (d.y - a.y) ** 2
    return total


def robot_frame_velocities(state: TeamState, twist: PayloadTwist) -> tuple[tuple[Vec2, Vec2], tuple[Vec2, Vec2]]:
    world = twist_to_robot_velocities(twist, state.payload, state.length)
    local = (to_robot_frame(world[0], state.robot_headings[0]), to_robot_frame(world[1], state.robot_headings[1]))
    return world, local


def within_box(local: tuple[Vec2, Vec2], v_max: Vec2) -> bool:
    return all(abs(v.x) <= v_max.x and abs(v.y) <= v_max.y for v in local)


def velocity_alpha(local: tuple[Vec2, Vec2], v_max: Vec2) -> float:
    """Closed-form largest scaling that keeps every component inside the box."""
    alpha = 1.0
    for v in local:
        if abs(v.x) > v_max.x:
            alpha = min(alpha, v_max.x / abs(v.x))
        if abs(v.y) > v_max.y:
            alpha = min(alpha, v_max.y / abs(v.y))
    return alpha


@njit(cache=True)
def _collides_at(alpha, pose, cmd, dt, shape, walls):
    s = alpha * dt
    return team_collides(
        pose[0] + cmd[0] * s,
        pose[1] + cmd[1] * s,
        pose[2] + cmd[2] * s,
        pose[3] + cmd[3] * s,
        pose[4] + cmd[4] * s,
        shape,
        walls,
    )


@njit(cache=True)
def collision_alpha(pose, cmd, dt, alpha_max, shape, walls, tol, max_iter):
    """Largest collision-free scaling in ``[0, alpha_max]`` by bisection.

    Returns ``(alpha, limited)`` where ``limited`` tells whether the collision
    bound was active.
    """
    if not _collides_at(alpha_max, pose, cmd, dt, shape, walls):
        return alpha_max, False
    lo = 0.0
    hi = alpha_max
    it = 0
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        if _collides_at(mid, pose, cmd, dt, shape, walls):
            hi = mid
        else:
            lo = mid
        it += 1
    return lo, True


def _scaled_velocities(state: TeamState, twist: PayloadTwist, alpha: float):
    return robot_frame_velocities(state, twist.scaled(alpha))


def project(
    state: TeamState,
    desired: TeamAction,
    scenario,
    dt: float = DEFAULT_DT,
    margin: float = DEFAULT_MARGIN,
) -> ProjectionResult:
    """Scale ``desired`` down until it is feasible for one step of length ``dt``."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    shape = scenario.shape()
    walls = scenario.walls(margin)
    pose = state.pose_row()
    if team_collides(*pose, shape, walls):
        raise ProjectionError("current state already intersects an inflated boundary")
    v_max = scenario.limits.v_max
    desired_world, desired_local = robot_frame_velocities(state, desired.twist)

    alpha_vel = velocity_alpha(desired_local, v_max)
    # the scaled components must land inside the box after rounding too
    while alpha_vel > 0.0 and not within_box(_scaled_velocities(state, desired.twist, alpha_vel)[1], v_max):
        alpha_vel = math.nextafter(alpha_vel, 0.0)

    cmd = desired.as_tuple()
    alpha, hit = collision_alpha(pose, cmd, dt, alpha_vel, shape, walls, ALPHA_TOL, MAX_BISECTIONS)
    alpha = float(alpha)
    # certify the state the caller will actually integrate, not the bisection's arithmetic
    nxt = state
    while alpha > 0.0:
        applied = desired.scaled(alpha)
        nxt = integrate(state, applied.twist, applied.robot_rates, dt)
        if not team_collides(*nxt.pose_row(), shape, walls):
            break
        hit = True
        alpha = max(0.0, alpha - ALPHA_TOL)
        nxt = state
    if alpha <= 0.0:
        alpha = 0.0
        limited = LimitedBy.STUCK
    elif hit:
        limited = LimitedBy.COLLISION
    elif alpha_vel < 1.0:
        limited = LimitedBy.VELOCITY_BOX
    else:
        limited = LimitedBy.NONE

    applied = desired.scaled(alpha)
    world, local = robot_frame_velocities(state, applied.twist)
    return ProjectionResult(
        applied_twist=applied.twist,
        applied_rates=applied.robot_rates,
        robot_velocities_world=world,
        robot_velocities_robot_frame=local,
        alpha=alpha,
        alpha_velocity=alpha_vel,
        limited_by=limited,
        objective=objective_value(desired_world, world),
        next_state=nxt,
    )


def alpha_is_feasible(state: TeamState, desired: TeamAction, scenario, alpha: float, dt=DEFAULT_DT, margin=DEFAULT_MARGIN) -> bool:
    """Direct re-check of one scaling: velocity box plus integrated footprint."""
    if not within_box(_scaled_velocities(state, desired.twist, alpha)[1], scenario.limits.v_max):
        return False
    return not _collides_at(alpha, state.pose_row(), desired.as_tuple(), dt, scenario.shape(), scenario.walls(margin))
