"""Rigid-bar kinematics for two robots carrying a payload between them.

Robot 1 sits on the +x end of the payload (in the payload frame) and robot 2
on the -x end. Robot positions are never stored: they are always recomputed
from the payload pose, so the bar length is preserved by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import OrientedBox, Pose2, Vec2, normalize_angle, rotate


@dataclass(frozen=True)
class KinematicLimits:
    v_max: Vec2
    omega_max: float

    def __post_init__(self):
        if not (self.v_max.x > self.v_max.y > 0.0):
            raise ValueError(f"need v_x,max > v_y,max > 0, got {self.v_max}")
        if not self.omega_max > 0.0:
            raise ValueError("omega_max must be positive")


@dataclass(frozen=True)
class PayloadTwist:
    linear: Vec2
    angular: float

    def __post_init__(self):
        if not math.isfinite(self.angular):
            raise ValueError("non-finite angular rate")

    def scaled(self, alpha: float) -> PayloadTwist:
        return PayloadTwist(self.linear * alpha, self.angular * alpha)


ZERO_TWIST = PayloadTwist(Vec2(0.0, 0.0), 0.0)


@dataclass(frozen=True)
class RobotCommand:
    """Velocity of one robot expressed in its own heading frame."""

    linear: Vec2
    angular: float


@dataclass(frozen=True)
class TeamState:
    payload: Pose2
    payload_half_dims: Vec2  # (half bar length, half bar width)
    robot_headings: tuple[float, float]
    robot_half_dims: Vec2

    def __post_init__(self):
        h1, h2 = self.robot_headings
        object.__setattr__(self, "robot_headings", (normalize_angle(h1), normalize_angle(h2)))

    @property
    def length(self) -> float:
        return 2.0 * self.payload_half_dims.x

    @property
    def robot_positions(self) -> tuple[Vec2, Vec2]:
        return payload_to_robot_positions(self.payload, self.length)

    def payload_box(self) -> OrientedBox:
        return OrientedBox(self.payload.position, self.payload.heading, self.payload_half_dims)

    def robot_boxes(self) -> tuple[OrientedBox, OrientedBox]:
        p1, p2 = self.robot_positions
        return (
            OrientedBox(p1, self.robot_headings[0], self.robot_half_dims),
            OrientedBox(p2, self.robot_headings[1], self.robot_half_dims),
        )

    def boxes(self) -> tuple[OrientedBox, OrientedBox, OrientedBox]:
        return (self.payload_box(), *self.robot_boxes())

    def shape(self) -> tuple[float, float, float, float]:
        """Packed footprint dimensions for :func:`dqct.collision.team_collides`."""
        return (
            self.payload_half_dims.x,
            self.payload_half_dims.y,
            self.robot_half_dims.x,
            self.robot_half_dims.y,
        )

    def pose_row(self) -> tuple[float, float, float, float, float]:
        p = self.payload
        return (p.position.x, p.position.y, p.heading, *self.robot_headings)


def _endpoint_offset(payload: Pose2, length: float) -> Vec2:
    if not length > 0.0:
        raise ValueError(f"payload length must be positive, got {length}")
    return rotate(Vec2(0.5 * length, 0.0), payload.heading)


def payload_to_robot_positions(payload: Pose2, length: float) -> tuple[Vec2, Vec2]:
    r = _endpoint_offset(payload, length)
    return payload.position + r, payload.position - r


def twist_to_robot_velocities(twist: PayloadTwist, payload: Pose2, length: float) -> tuple[Vec2, Vec2]:
    """World-frame endpoint velocities ``v + w * perp(r_i)`` of a rigid bar."""
    p = _endpoint_offset(payload, length).perp()
    w = twist.angular
    v = twist.linear
    return Vec2(v.x + w * p.x, v.y + w * p.y), Vec2(v.x - w * p.x, v.y - w * p.y)


def robot_velocities_to_twist(v1: Vec2, v2: Vec2, payload: Pose2, length: float) -> PayloadTwist:
    """Least-squares twist for a pair of endpoint velocities.

    The normal equations decouple: the linear part is the mean endpoint
    velocity, and the angular part is the relative velocity projected on the
    bar's perpendicular. Any stretching component along the bar is dropped.
    """
    p = _endpoint_offset(payload, length).perp()
    linear = Vec2(0.5 * (v1.x + v2.x), 0.5 * (v1.y + v2.y))
    angular = p.dot(v1 - v2) / (2.0 * p.dot(p))
    return PayloadTwist(linear, angular)


def to_robot_frame(v: Vec2, heading: float) -> Vec2:
    return rotate(v, -heading)


def integrate(state: TeamState, twist: PayloadTwist, robot_rates: tuple[float, float], dt: float) -> TeamState:
    """One explicit-Euler step of the payload pose and robot headings."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    p = state.payload
    pos = Vec2(p.position.x + twist.linear.x * dt, p.position.y + twist.linear.y * dt)
    payload = Pose2(pos, p.heading + twist.angular * dt)
    h1, h2 = state.robot_headings
    return TeamState(
        payload,
        state.payload_half_dims,
        (h1 + robot_rates[0] * dt, h2 + robot_rates[1] * dt),
        state.robot_half_dims,
    )
