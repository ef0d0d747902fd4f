import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqct.geometry import OrientedBox, Pose2, Vec2, inflate, sat_intersects
from dqct.kinematics import PayloadTwist, TeamState, integrate
from dqct.lowlevel import (
    LimitedBy,
    ProjectionError,
    TeamAction,
    alpha_is_feasible,
    objective_value,
    project,
)
from dqct.scenario import Scenario

L = 1.143
REACH = L / 2 + 0.35  # payload centre to the front of robot 1 at heading 0


def wall_scene(gap: float) -> Scenario:
    """One wall whose face is ``gap`` ahead of robot 1's front edge."""
    face = REACH + gap
    wall = OrientedBox(Vec2(face + 0.5, 0.0), 0.0, Vec2(0.5, 2.0))
    return Scenario((wall,), Vec2(0, 0), Vec2(-3, 0), 0.0)


def oracle_alpha(state: TeamState, action: TeamAction, scenario: Scenario, margin=0.02, step=1e-4) -> float:
    """Largest grid alpha whose integrated footprint misses every inflated wall (SAT on objects)."""
    walls = [inflate(b, margin) for b in scenario.boundaries]
    v_max = scenario.limits.v_max
    best = 0.0
    for a in np.arange(0.0, 1.0 + step / 2, step):
        act = action.scaled(float(a))
        n = integrate(state, act.twist, act.robot_rates, 0.1)
        from dqct.lowlevel import robot_frame_velocities

        _, local = robot_frame_velocities(state, act.twist)
        if any(abs(v.x) > v_max.x or abs(v.y) > v_max.y for v in local):
            break
        if any(sat_intersects(b, w) for b in n.boxes() for w in walls):
            break
        best = float(a)
    return best


def test_interior_point_passes_through():
    s = wall_scene(2.0)
    st0 = s.initial_state()
    desired = TeamAction(PayloadTwist(Vec2(0.5, 0.1), 0.2), (0.1, -0.1))
    r = project(st0, desired, s)
    assert r.alpha == 1.0 and r.limited_by is LimitedBy.NONE
    assert r.applied_action == desired
    assert r.objective == 0.0


def test_closed_form_velocity_box():
    s = wall_scene(5.0)
    st0 = TeamState(Pose2(Vec2(0, 0), math.pi / 2), s.bar_half_dims, (0.0, 0.0), s.robot_half_dims)
    # robot 1 on top, robot 2 below; rotation adds +-0.375 to the x velocity
    desired = TeamAction(PayloadTwist(Vec2(1.125, 0.0), -0.75 / L), (0.0, 0.0))
    r = project(st0, desired, s)
    assert r.alpha_velocity == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert r.limited_by is LimitedBy.VELOCITY_BOX
    v1, v2 = r.robot_velocities_robot_frame
    assert v1.x == pytest.approx(1.0, abs=1e-12) and v2.x == pytest.approx(0.5, abs=1e-12)
    assert abs(v1.y) < 1e-12 and abs(v2.y) < 1e-12


def test_wall_ahead_matches_grid_oracle():
    s = wall_scene(0.05)
    st0 = s.initial_state()
    desired = TeamAction(PayloadTwist(Vec2(1.0, 0.0), 0.0), (0.0, 0.0))
    r = project(st0, desired, s)
    assert r.limited_by is LimitedBy.COLLISION
    assert r.alpha == pytest.approx(0.3, abs=2e-3)
    assert abs(r.alpha - oracle_alpha(st0, desired, s)) <= 2e-3
    assert not alpha_is_feasible(st0, desired, s, r.alpha + 0.01)


def test_colliding_start_raises():
    s = wall_scene(0.01)
    with pytest.raises(ProjectionError):
        project(s.initial_state(), TeamAction(PayloadTwist(Vec2(1, 0), 0), (0, 0)), s)


def test_stuck_returns_zero():
    s = wall_scene(0.02 + 2e-5)
    r = project(s.initial_state(), TeamAction(PayloadTwist(Vec2(1, 0), 0), (0, 0)), s)
    assert r.alpha == 0.0 and r.limited_by is LimitedBy.STUCK
    assert r.applied_twist.linear == Vec2(0, 0)


def test_objective_examples():
    d = (Vec2(1, 0), Vec2(1, 0))
    assert objective_value(d, d) == 0.0
    assert objective_value(d, (Vec2(0.5, 0), Vec2(0.5, 0))) == pytest.approx(0.5)


near = st.floats(0.021, 0.4)
comp = st.floats(-3.0, 3.0, allow_nan=False)
head = st.floats(-math.pi, math.pi)


@st.composite
def instances(draw):
    s = wall_scene(draw(near))
    state = TeamState(
        Pose2(Vec2(0.0, draw(st.floats(-0.3, 0.3))), draw(st.floats(-0.15, 0.15))),
        s.bar_half_dims,
        (draw(head), draw(head)),
        s.robot_half_dims,
    )
    if s.state_collides(state, 0.02):
        state = s.initial_state()
    action = TeamAction(PayloadTwist(Vec2(draw(comp), draw(comp)), draw(comp)), (draw(comp), draw(comp)))
    return s, state, action


@settings(max_examples=200, deadline=None)
@given(instances())
def test_projection_invariants(inst):
    s, state, desired = inst
    r = project(state, desired, s)
    v_max = s.limits.v_max
    for v in r.robot_velocities_robot_frame:
        assert abs(v.x) <= v_max.x and abs(v.y) <= v_max.y
    assert (r.alpha == 0.0) == (r.limited_by is LimitedBy.STUCK)
    assert 0.0 <= r.alpha <= 1.0
    nxt = integrate(state, r.applied_twist, r.applied_rates, 0.1)
    assert not s.state_collides(nxt, 0.02)
    assert r.next_state == nxt
    # rigid consistency of the scaled velocities
    w1, w2 = r.robot_velocities_world
    p1, p2 = state.robot_positions
    assert abs((w1 - w2).dot(p1 - p2)) < 1e-10
    if r.limited_by is LimitedBy.COLLISION:
        assert not alpha_is_feasible(state, desired, s, min(1.0, r.alpha + 0.01)) or r.alpha + 0.01 > r.alpha_velocity
    # homogeneity: objective is (1 - alpha)^2 |desired|^2
    from dqct.kinematics import twist_to_robot_velocities

    dw = twist_to_robot_velocities(desired.twist, state.payload, state.length)
    norm2 = sum(v.dot(v) for v in dw)
    assert r.objective == pytest.approx((1 - r.alpha) ** 2 * norm2, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(instances(), st.floats(0.0, 0.05), st.floats(0.0, 0.05))
def test_larger_margin_never_increases_alpha(inst, m1, m2):
    s, state, desired = inst
    lo, hi = sorted((m1, m2))
    if s.state_collides(state, hi):
        return
    assert project(state, desired, s, margin=hi).alpha <= project(state, desired, s, margin=lo).alpha + 1e-3


@settings(max_examples=100, deadline=None)
@given(instances())
def test_returned_alpha_minimises_objective_over_feasible_scalings(inst):
    s, state, desired = inst
    r = project(state, desired, s)
    from dqct.kinematics import twist_to_robot_velocities

    dw = twist_to_robot_velocities(desired.twist, state.payload, state.length)
    for a in np.linspace(0.0, r.alpha, 11):
        act = desired.scaled(float(a))
        aw = twist_to_robot_velocities(act.twist, state.payload, state.length)
        assert objective_value(dw, aw) >= r.objective - 1e-12
