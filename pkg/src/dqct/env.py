"""
The team transport MDP.

An action is a payload twist plus two robot heading rates. In projected mode
the action goes through :func:`dqct.lowlevel.project` before integration, so
the team can never touch a wall. Raw mode is the unconstrained ablation: the
desired robot velocities are clipped to a symmetric box and integrated, and
touching a wall ends the episode.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .collision import cast_rays, team_collides
from .geometry import Vec2, rotate
from .kinematics import (
    PayloadTwist,
    TeamState,
    integrate,
    robot_velocities_to_twist,
    to_robot_frame,
    twist_to_robot_velocities,
)
from .lowlevel import DEFAULT_DT, DEFAULT_MARGIN, LimitedBy, TeamAction, ZERO_ACTION, project
from .scenario import Scenario, to_dict

OBS_DIM = 29
ACTION_DIM = 5


class Mode(enum.Enum):
    PROJECTED = "projected"
    RAW = "raw"

    @classmethod
    def parse(cls, name: str) -> Mode:
        key = name.lower()
        if key in ("projected", "blct", "bilevel"):
            return cls.PROJECTED
        if key in ("raw", "rl"):
            return cls.RAW
        raise ValueError(f"unknown mode {name!r}")


@dataclass(frozen=True)
class RewardWeights:
    lambda1: float = 1.0
    lambda2: float = 0.05
    gamma: float = 0.99

    def __post_init__(self):
        if self.lambda1 < 0.0 or self.lambda2 < 0.0:
            raise ValueError("reward weights must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")


@dataclass(frozen=True)
class EnvConfig:
    dt: float = DEFAULT_DT
    goal_tolerance: float = 0.15
    max_steps: int = 300
    margin: float = DEFAULT_MARGIN
    n_rays: int = 16
    ray_range: float = 5.0
    # per-step form of the start-anchored distance term instead of goal progress
    r_dist_literal: bool = False
    # a raw-mode crash is charged the time penalty of the steps it forfeits
    collision_as_timeout: bool = True


def action_bounds(scenario: Scenario) -> np.ndarray:
    lim = scenario.limits
    return np.array([lim.v_max.x, lim.v_max.x, lim.omega_max, lim.omega_max, lim.omega_max])


@dataclass(frozen=True)
class Observation:
    """Flat 29-vector with named views.

    Layout: goal in payload frame (2), payload heading sin/cos (2), robot
    headings relative to the payload as sin/cos pairs (4), ray clearances
    (16), previous action normalized by its bounds (5).
    """

    vector: np.ndarray

    @property
    def goal_in_payload_frame(self) -> Vec2:
        return Vec2(self.vector[0], self.vector[1])

    @property
    def payload_heading(self) -> tuple[float, float]:
        return float(self.vector[2]), float(self.vector[3])

    @property
    def robot_headings_rel(self) -> tuple[tuple[float, float], tuple[float, float]]:
        v = self.vector
        return (float(v[4]), float(v[5])), (float(v[6]), float(v[7]))

    @property
    def rays(self) -> np.ndarray:
        return self.vector[8:24]

    @property
    def previous_action(self) -> np.ndarray:
        return self.vector[24:29]


def encode_observation(
    state: TeamState, scenario: Scenario, prev_action: TeamAction, config: EnvConfig = EnvConfig()
) -> Observation:
    p = state.payload
    th = p.heading
    g = rotate(scenario.goal - p.position, -th)
    out = np.empty(OBS_DIM)
    out[0], out[1] = g.x, g.y
    out[2], out[3] = math.sin(th), math.cos(th)
    for i, h in enumerate(state.robot_headings):
        out[4 + 2 * i] = math.sin(h - th)
        out[5 + 2 * i] = math.cos(h - th)
    angles = th + np.arange(config.n_rays) * (2.0 * math.pi / config.n_rays)
    out[8:24] = cast_rays(p.position.x, p.position.y, angles, scenario.walls(), config.ray_range)
    out[24:29] = np.asarray(prev_action.as_tuple()) / action_bounds(scenario)
    return Observation(out)


def velocity_shaping(local: tuple[Vec2, Vec2]) -> float:
    """Forward-motion shaping term: sum over robots of ``v_x - |v_y|``."""
    return sum(v.x - abs(v.y) for v in local)


def compute_reward(
    prev: TeamState,
    next_state: TeamState,
    applied_velocities: tuple[Vec2, Vec2],
    weights: RewardWeights,
    goal: Vec2,
    start: Vec2 | None = None,
    literal: bool = False,
) -> float:
    """Per-step reward: time penalty, goal progress and velocity shaping."""
    x_next = next_state.payload.position
    if literal:
        if start is None:
            raise ValueError("the literal distance term needs the start position")
        r_dist = (goal - start).norm() - (x_next - start).norm()
    else:
        r_dist = (goal - prev.payload.position).norm() - (goal - x_next).norm()
    return -1.0 + weights.lambda1 * r_dist + weights.lambda2 * velocity_shaping(applied_velocities)


@dataclass
class StepResult:
    next_state: TeamState
    observation: Observation
    reward: float
    terminated: bool
    truncated: bool
    info: dict = field(default_factory=dict)


class EnvError(RuntimeError):
    pass


class TransportEnv:
    """Single-writer environment over one scenario at a time."""

    def __init__(
        self,
        scenario: Scenario,
        mode: Mode = Mode.PROJECTED,
        weights: RewardWeights = RewardWeights(),
        config: EnvConfig = EnvConfig(),
        log: IO[str] | None = None,
    ):
        self.scenario = scenario
        self.mode = mode
        self.weights = weights
        self.config = config
        self.log = log
        self.state: TeamState | None = None
        self.t = 0
        self.prev_action = ZERO_ACTION

    def reset(self, scenario: Scenario | None = None) -> tuple[TeamState, Observation]:
        if scenario is not None:
            self.scenario = scenario
        s = self.scenario
        state = s.initial_state()
        if s.state_collides(state, self.config.margin):
            raise EnvError(f"start configuration of {s.name} intersects an inflated boundary")
        self.state = state
        self.t = 0
        self.prev_action = ZERO_ACTION
        obs = encode_observation(state, s, ZERO_ACTION, self.config)
        if self.log is not None:
            self._write({"kind": "scenario", "scenario": to_dict(s), "mode": self.mode.value})
            self._write({"kind": "reset", "t": 0, **_pose_fields(state)})
        return state, obs

    def step(self, action: TeamAction) -> StepResult:
        if self.state is None:
            raise EnvError("step() called before reset()")
        cfg = self.config
        s = self.scenario
        prev = self.state
        collision = False
        stuck = False
        objective = 0.0
        if self.mode is Mode.PROJECTED:
            res = project(prev, action, s, cfg.dt, cfg.margin)
            alpha = res.alpha
            stuck = res.limited_by is LimitedBy.STUCK
            objective = res.objective
            nxt = res.next_state
            local = res.robot_velocities_robot_frame
            limited = res.limited_by.value
        else:
            twist = _clip_raw(prev, action, s.limits.v_max.x)
            nxt = integrate(prev, twist, action.robot_rates, cfg.dt)
            world = twist_to_robot_velocities(twist, prev.payload, prev.length)
            local = (to_robot_frame(world[0], prev.robot_headings[0]), to_robot_frame(world[1], prev.robot_headings[1]))
            alpha = 1.0
            collision = bool(team_collides(*nxt.pose_row(), s.shape(), s.walls()))
            limited = LimitedBy.NONE.value

        self.t += 1
        reward = compute_reward(prev, nxt, local, self.weights, s.goal, s.start, cfg.r_dist_literal)
        success = (not collision) and (nxt.payload.position - s.goal).norm() < cfg.goal_tolerance
        terminated = collision or success
        truncated = (not terminated) and self.t >= cfg.max_steps
        if collision and cfg.collision_as_timeout:
            reward -= float(cfg.max_steps - self.t)

        self.state = nxt
        self.prev_action = action
        obs = encode_observation(nxt, s, action, cfg)
        info = {
            "applied_alpha": alpha,
            "stuck": stuck,
            "collision": collision,
            "success": success,
            "limited_by": limited,
            "objective": objective,
            "robot_frame_velocities": local,
        }
        if self.log is not None:
            self._write(
                {
                    "kind": "step",
                    "t": self.t,
                    **_pose_fields(nxt),
                    "action": list(action.as_tuple()),
                    "applied_alpha": alpha,
                    "reward": reward,
                    "objective": objective,
                    "terminated": terminated,
                    "truncated": truncated,
                    "success": success,
                    "collision": collision,
                    "stuck": stuck,
                }
            )
        return StepResult(nxt, obs, reward, terminated, truncated, info)

    def _write(self, record: dict) -> None:
        self.log.write(json.dumps(record) + "\n")


def _clip_raw(state: TeamState, action: TeamAction, bound: float) -> PayloadTwist:
    """Clip each robot's frame velocity to a symmetric box, then refit a twist."""
    world = twist_to_robot_velocities(action.twist, state.payload, state.length)
    clipped = []
    for v, h in zip(world, state.robot_headings):
        local = to_robot_frame(v, h)
        if abs(local.x) <= bound and abs(local.y) <= bound:
            clipped.append(v)
            continue
        local = Vec2(min(max(local.x, -bound), bound), min(max(local.y, -bound), bound))
        clipped.append(rotate(local, h))
    if clipped[0] is world[0] and clipped[1] is world[1]:
        return action.twist
    return robot_velocities_to_twist(clipped[0], clipped[1], state.payload, state.length)


def _pose_fields(state: TeamState) -> dict:
    p = state.payload
    return {"payload": [p.position.x, p.position.y, p.heading], "robot_headings": list(state.robot_headings)}


def distance_to_goal(state: TeamState, scenario: Scenario) -> float:
    return (state.payload.position - scenario.goal).norm()
