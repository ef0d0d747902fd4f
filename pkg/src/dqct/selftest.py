"""
Fast randomised invariant checks, run by ``dqct selftest``.

These are smaller versions of the property suites in the test tree, small
enough to run on an installed package without pytest.
"""

from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np

from .baselines import LatticeConfig, astar_plan, dijkstra_plan
from .env import Mode, TransportEnv, action_bounds
from .geometry import OrientedBox, Vec2, sat_intersects
from .lowlevel import LimitedBy, TeamAction, alpha_is_feasible, project
from .policy.network import PolicyParams, actor_mean, squashed_log_prob
from .policy.ppo import TrainConfig, gae, loss_and_grad
from .scenario import Family, generate

Check = Callable[[int], str]


def _random_box(rng: np.random.Generator) -> OrientedBox:
    return OrientedBox(
        Vec2(*rng.uniform(-1.0, 1.0, 2)),
        rng.uniform(-math.pi, math.pi),
        Vec2(*rng.uniform(0.05, 0.6, 2)),
    )


def _sampled_overlap(a: OrientedBox, b: OrientedBox, step: float = 0.005) -> bool:
    hx, hy = a.half_dims.x, a.half_dims.y
    xs = np.arange(-hx, hx + 1e-12, step)
    ys = np.arange(-hy, hy + 1e-12, step)
    gx, gy = np.meshgrid(xs, ys)
    c, s = math.cos(a.heading), math.sin(a.heading)
    wx = a.center.x + c * gx - s * gy
    wy = a.center.y + s * gx + c * gy
    dx, dy = wx - b.center.x, wy - b.center.y
    cb, sb = math.cos(b.heading), math.sin(b.heading)
    lx = cb * dx + sb * dy
    ly = -sb * dx + cb * dy
    return bool(np.any((np.abs(lx) <= b.half_dims.x) & (np.abs(ly) <= b.half_dims.y)))


def check_sat(n: int) -> str:
    rng = np.random.default_rng(11)
    done = 0
    while done < n:
        a, b = _random_box(rng), _random_box(rng)
        sat = sat_intersects(a, b)
        # skip near-tangent pairs, where sampling cannot decide
        if sat_intersects(a, b.__class__(b.center, b.heading, b.half_dims + Vec2(0.01, 0.01))) != sat_intersects(
            a, b.__class__(b.center, b.heading, Vec2(max(b.half_dims.x - 0.01, 1e-3), max(b.half_dims.y - 0.01, 1e-3)))
        ):
            continue
        if sat != _sampled_overlap(a, b):
            raise AssertionError(f"SAT disagrees with sampling for {a} / {b}")
        done += 1
    return f"{n} box pairs agree"


def check_rollouts(n: int) -> str:
    rng = np.random.default_rng(12)
    families = [Family.LEFT_TURN, Family.FORWARD_BOTTLENECK, Family.RIGHT_TURN]
    steps = 0
    for i in range(n):
        s = generate(families[i % 3], 500 + i)
        env = TransportEnv(s, Mode.PROJECTED)
        env.reset()
        bound = action_bounds(s)
        for _ in range(100):
            res = env.step(TeamAction.from_array(rng.uniform(-1.0, 1.0, 5) * bound))
            st = res.next_state
            p1, p2 = st.robot_positions
            if abs((p1 - p2).norm() - s.payload_length) >= 1e-9:
                raise AssertionError("rigid-bar length drifted")
            if s.state_collides(st):
                raise AssertionError(f"projected rollout touched a wall in {s.name}")
            steps += 1
            if res.terminated:
                break
    return f"{steps} projected steps rigid and collision-free"


def check_projection(n: int) -> str:
    rng = np.random.default_rng(13)
    collision = 0
    for i in range(n):
        s = generate(Family.FORWARD_BOTTLENECK, 700 + i)
        state = s.initial_state()
        desired = TeamAction.from_array(rng.uniform(-3.0, 3.0, 5))
        res = project(state, desired, s)
        for v in res.robot_velocities_robot_frame:
            if abs(v.x) > s.limits.v_max.x or abs(v.y) > s.limits.v_max.y:
                raise AssertionError("projected velocity outside the box")
        if res.limited_by is LimitedBy.COLLISION:
            collision += 1
            if alpha_is_feasible(state, desired, s, min(1.0, res.alpha + 0.01)):
                raise AssertionError("collision-limited alpha is not maximal")
    return f"{n} projections inside the velocity box ({collision} collision-limited)"


def check_gradients(n: int) -> str:
    rng = np.random.default_rng(14)
    worst = 0.0
    cfg = TrainConfig(entropy_coef=0.01, value_coef=0.5)
    for t in range(n):
        p = PolicyParams.init(3, 2, hidden=4, seed=t)
        p.log_std = rng.uniform(-0.5, 0.3, 2)
        obs = rng.standard_normal((8, 3))
        acts = rng.standard_normal((8, 2))
        bounds = np.ones((8, 2))
        adv = rng.standard_normal(8)
        ret = rng.standard_normal(8)
        # behaviour log-probs equal to the current ones keep every ratio at 1
        old = squashed_log_prob(acts, actor_mean(p, obs), p.log_std, bounds)
        _, g, _ = loss_and_grad(p, obs, acts, old, adv, ret, bounds, cfg)
        theta = p.flat()
        h = 1e-5
        num = np.empty_like(theta)
        for j in range(len(theta)):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            lp = loss_and_grad(PolicyParams.from_flat(tp, p), obs, acts, old, adv, ret, bounds, cfg)[0]
            lm = loss_and_grad(PolicyParams.from_flat(tm, p), obs, acts, old, adv, ret, bounds, cfg)[0]
            num[j] = (lp - lm) / (2 * h)
        rel = np.abs(g - num) / np.maximum(np.maximum(np.abs(g), np.abs(num)), 1e-6)
        worst = max(worst, float(rel.max()))
    if worst >= 1e-4:
        raise AssertionError(f"gradient check relative error {worst:.2e}")
    return f"max relative error {worst:.1e} over {n} trials"


def check_gae(_: int) -> str:
    adv, _ = gae(np.ones(3), np.zeros(3), np.zeros(3, dtype=bool), 0.5, 1.0, 0.0)
    if not np.allclose(adv, [1.75, 1.5, 1.0], atol=1e-12):
        raise AssertionError(f"GAE hand case gave {adv}")
    return "hand case (1.75, 1.5, 1)"


def check_astar(n: int) -> str:
    for i in range(n):
        s = generate(Family.LEFT_TURN, 900 + i)
        a = astar_plan(s, LatticeConfig())
        d = dijkstra_plan(s, LatticeConfig())
        if a.feasible != d.feasible or (a.feasible and a.cost != d.cost):
            raise AssertionError(f"A* cost {a.cost} != Dijkstra {d.cost} on {s.name}")
    return f"A* equals Dijkstra on {n} scenarios"


CHECKS: list[tuple[str, Check, int]] = [
    ("sat-vs-sampling", check_sat, 300),
    ("rigid-and-collision-free", check_rollouts, 20),
    ("projection-box-and-maximality", check_projection, 100),
    ("gradient-check", check_gradients, 3),
    ("gae-hand-case", check_gae, 1),
    ("astar-vs-dijkstra", check_astar, 3),
]


def run(out=print) -> bool:
    ok = True
    for name, fn, n in CHECKS:
        t0 = time.perf_counter()
        try:
            detail = fn(n)
            out(f"PASS {name}: {detail} ({time.perf_counter() - t0:.1f}s)")
        except AssertionError as exc:
            ok = False
            out(f"FAIL {name}: {exc}")
    return ok
