"""Acceptance criteria AC-1 .. AC-11.

Each test records a one-line verdict that the terminal summary prints as
``AC-n PASS|FAIL detail``. The learning experiments (AC-5, AC-6, AC-7)
train from scratch and take roughly 25 minutes together on one core; set
DQCT_ACCEPTANCE_CACHE to a directory to reuse checkpoints between runs.
"""

import math
import os
import statistics
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from dqct.baselines import astar_plan, dijkstra_plan, rrtstar_plan
from dqct.env import EnvConfig, Mode, RewardWeights, TransportEnv
from dqct.geometry import OrientedBox, Pose2, Vec2, inflate, sat_intersects
from dqct.harness import evaluate
from dqct.kinematics import PayloadTwist, TeamState
from dqct.lowlevel import LimitedBy, TeamAction, alpha_is_feasible, project
from dqct.policy.network import PolicyParams, actor_mean, load_checkpoint, save_checkpoint, squashed_log_prob
from dqct.policy.ppo import TrainConfig, loss_and_grad
from dqct.policy.train import train
from dqct.scenario import Family, ScenarioParams, generate, generate_batch

from conftest import ACCEPTANCE
from oracles import (
    finite_difference,
    grid_alpha,
    relative_error,
    sampled_overlap,
    signed_separation,
    team_hits,
)

TRAIN_SEED = 1000
HELD_OUT_SEED = 999_999
ROOT = Path(__file__).resolve().parents[1]


def verdict(key: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[key] = (bool(ok), detail)
    print(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{key}: {detail}"


def _shape(s):
    return (s.bar_half_dims.x, s.bar_half_dims.y), (s.robot_half_dims.x, s.robot_half_dims.y)


# -- AC-1 / AC-2 ---------------------------------------------------------------

_ROLLOUTS = {}


def _projected_rollouts():
    """1,000 random-action projected rollouts of 300 steps; returns visited pose rows per scenario."""
    if _ROLLOUTS:
        return _ROLLOUTS["data"]
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    families = (Family.LEFT_TURN, Family.FORWARD_BOTTLENECK, Family.RIGHT_TURN)
    scen = [generate(families[i % 3], 5000 + i, ScenarioParams(check_feasibility=False)) for i in range(50)]
    visited = {i: [] for i in range(len(scen))}
    bar_err = 0.0
    for k in range(1000):
        i = k % len(scen)
        s = scen[i]
        state = s.initial_state()
        acts = rng.uniform([-1, -1, -1.5, -1.5, -1.5], [1, 1, 1.5, 1.5, 1.5], (300, 5))
        rows = np.empty((300, 5))
        for t in range(300):
            a = acts[t]
            res = project(state, TeamAction(PayloadTwist(Vec2(a[0], a[1]), a[2]), (a[3], a[4])), s)
            state = res.next_state
            r1, r2 = state.robot_positions
            bar_err = max(bar_err, abs(math.dist(r1.as_tuple(), r2.as_tuple()) - s.payload_length))
            rows[t] = state.pose_row()
        visited[i].append(rows)
    elapsed = time.perf_counter() - t0
    _ROLLOUTS["data"] = (scen, visited, bar_err, elapsed)
    return _ROLLOUTS["data"]


def test_ac1_kinematic_constraint():
    _, _, bar_err, elapsed = _projected_rollouts()
    verdict(
        "AC-1",
        bar_err < 1e-9 and elapsed < 60.0,
        f"max | |x_r1 - x_r2| - L | = {bar_err:.2e} over 300,000 states (< 1e-9); rollouts took {elapsed:.1f} s (< 60 s)",
    )


def test_ac2_collision_free():
    scen, visited, _, _ = _projected_rollouts()
    hits = 0
    n = 0
    for i, s in enumerate(scen):
        rows = np.vstack(visited[i])
        bar, robot = _shape(s)
        hits += int(team_hits(rows, bar, robot, s.boundaries).sum())
        n += len(rows)
    verdict("AC-2", hits == 0, f"{hits} team/boundary intersections in {n:,} projected states (0 required)")


# -- AC-3 ------------------------------------------------------------------------


def test_ac3_sat_matches_sampling():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    agree = checked = 0
    for _ in range(10_000):
        a, b = (
            OrientedBox(Vec2(*rng.uniform(-1.5, 1.5, 2)), rng.uniform(-math.pi, math.pi), Vec2(*rng.uniform(0.05, 0.8, 2)))
            for _ in range(2)
        )
        if abs(signed_separation(a, b)) < 0.01:
            continue
        checked += 1
        agree += sat_intersects(a, b) == sampled_overlap(a, b)
    elapsed = time.perf_counter() - t0
    verdict(
        "AC-3",
        agree == checked and elapsed < 120.0,
        f"{agree}/{checked} pairs agree outside the 0.01 m band ({10_000 - checked} in band); {elapsed:.1f} s (< 120 s)",
    )


# -- AC-4 ------------------------------------------------------------------------


def _near_obstacle_instances(n, rng):
    families = (Family.LEFT_TURN, Family.FORWARD_BOTTLENECK, Family.RIGHT_TURN)
    scen = [generate(families[i % 3], 7000 + i, ScenarioParams(check_feasibility=False)) for i in range(30)]
    out = []
    while len(out) < n:
        s = scen[len(out) % len(scen)]
        x0, x1, y0, y1 = s.bounds()
        th = rng.uniform(-math.pi, math.pi)
        state = TeamState(
            Pose2(Vec2(rng.uniform(x0, x1), rng.uniform(y0, y1)), th),
            s.bar_half_dims,
            (th + rng.uniform(-1, 1), th + rng.uniform(-1, 1)),
            s.robot_half_dims,
        )
        if s.state_collides(state, 0.02) or not s.state_collides(state, 0.3):
            continue
        a = rng.uniform([-1, -1, -1.5, -1.5, -1.5], [1, 1, 1.5, 1.5, 1.5])
        out.append((s, state, TeamAction(PayloadTwist(Vec2(a[0], a[1]), a[2]), (a[3], a[4]))))
    return out


def test_ac4_projection_maximal_and_feasible():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst_gap = 0.0
    box_ok = True
    collision_ok = True
    limited = {k: 0 for k in LimitedBy}
    for s, state, desired in _near_obstacle_instances(1000, rng):
        r = project(state, desired, s)
        limited[r.limited_by] += 1
        v_max = s.limits.v_max
        box_ok &= all(abs(v.x) <= v_max.x and abs(v.y) <= v_max.y for v in r.robot_velocities_robot_frame)
        bar, robot = _shape(s)
        oracle = grid_alpha(
            state.pose_row(), desired.as_tuple(), bar, robot, (v_max.x, v_max.y), [inflate(b, 0.02) for b in s.boundaries]
        )
        worst_gap = max(worst_gap, abs(r.alpha - oracle))
        if r.limited_by is LimitedBy.COLLISION:
            collision_ok &= not alpha_is_feasible(state, desired, s, min(1.0, r.alpha + 0.01))
    elapsed = time.perf_counter() - t0
    mix = ", ".join(f"{k.value} {v}" for k, v in limited.items())
    verdict(
        "AC-4",
        box_ok and collision_ok and worst_gap <= 2e-3 and elapsed < 120.0,
        f"velocity box exact: {box_ok}; max |alpha - grid oracle| = {worst_gap:.1e} (<= 2e-3); "
        f"alpha+0.01 infeasible on every collision-limited case: {collision_ok}; limited_by mix: {mix}; {elapsed:.1f} s",
    )


# -- learning experiments (AC-5, AC-6, AC-7) ------------------------------------------


def _trained(family, mode, steps, tmp_dir):
    cache = os.environ.get("DQCT_ACCEPTANCE_CACHE")
    folder = Path(cache) if cache else Path(tmp_dir)
    folder.mkdir(parents=True, exist_ok=True)
    path = folder / f"{family.value}_{mode.value}_{steps}_seed0.json"
    if path.exists():
        return load_checkpoint(path), 0.0
    t0 = time.perf_counter()
    scen = generate_batch(family, 64, TRAIN_SEED)
    params, _ = train(scen, TrainConfig(total_steps=steps), mode, threads=1)
    save_checkpoint(params, path, {"mode": mode.value, "env_steps": steps})
    return params, time.perf_counter() - t0


@pytest.fixture(scope="module")
def left_policies(tmp_path_factory):
    d = tmp_path_factory.mktemp("left")
    blct, t_blct = _trained(Family.LEFT_TURN, Mode.PROJECTED, 2_000_000, d)
    rl, t_rl = _trained(Family.LEFT_TURN, Mode.RAW, 2_000_000, d)
    return blct, rl, t_blct, t_rl


def test_ac5_learnability(tmp_path):
    params, seconds = _trained(Family.STRAIGHT, Mode.PROJECTED, 500_000, tmp_path)
    held_out = generate_batch(Family.STRAIGHT, 100, HELD_OUT_SEED)
    records = evaluate("blct", params, held_out)
    rate = 100.0 * sum(r.success for r in records) / len(records)
    timing = f"trained in {seconds / 60:.1f} min" if seconds else "checkpoint from cache"
    verdict(
        "AC-5",
        rate >= 90.0 and seconds < 1800.0,
        f"deterministic success {rate:.0f}% on 100 held-out straight corridors after 500k steps (>= 90%); {timing} (< 30 min)",
    )


def test_ac6_blct_beats_raw_rl(left_policies):
    blct, rl, t_blct, t_rl = left_policies
    held_out = generate_batch(Family.LEFT_TURN, 100, HELD_OUT_SEED)
    s_blct = sum(r.success for r in evaluate("blct", blct, held_out))
    s_rl = sum(r.success for r in evaluate("rl", rl, held_out))
    verdict(
        "AC-6",
        s_blct >= s_rl + 15,
        f"left turn, 2M steps each: BLCT {s_blct}% vs RL {s_rl}% (gap {s_blct - s_rl} pp, >= 15 required)",
    )


def test_ac7_policy_faster_than_astar(left_policies):
    blct = left_policies[0]
    held_out = generate_batch(Family.LEFT_TURN, 100, HELD_OUT_SEED)
    pol = evaluate("blct", blct, held_out)
    ast = evaluate("astar", None, held_out)
    pol_ok = [r.planning_time for r in pol if r.success]
    ast_ok = [r.planning_time for r in ast if r.success]
    m_pol = statistics.fmean(pol_ok) if pol_ok else math.inf
    m_ast = statistics.fmean(ast_ok) if ast_ok else math.nan
    all_pol = statistics.fmean(r.planning_time for r in pol)
    all_ast = statistics.fmean(r.planning_time for r in ast)
    verdict(
        "AC-7",
        m_pol < m_ast,
        f"mean planning time over successful episodes: policy {m_pol * 1e3:.2f} ms ({len(pol_ok)} eps) vs "
        f"A* {m_ast * 1e3:.2f} ms ({len(ast_ok)} eps); over all 100 episodes {all_pol * 1e3:.2f} vs {all_ast * 1e3:.2f} ms",
    )


# -- AC-8 ------------------------------------------------------------------------


def test_ac8_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    cfg = TrainConfig()
    worst = 0.0
    for trial in range(100):
        p = PolicyParams.init(3, 2, hidden=4, seed=trial)
        p.log_std = rng.uniform(-0.5, 0.3, 2)
        obs = rng.standard_normal((8, 3))
        acts = rng.standard_normal((8, 2))
        bounds = np.tile(rng.uniform(0.5, 2.0, 2), (8, 1))
        adv = rng.standard_normal(8)
        ret = rng.standard_normal(8)
        old = squashed_log_prob(acts, actor_mean(p, obs), p.log_std, bounds)
        # half the trials move the behaviour policy so some ratios sit in the clipped region
        if trial % 2:
            old = old + rng.uniform(-0.6, 0.6, 8)
        _, g, _ = loss_and_grad(p, obs, acts, old, adv, ret, bounds, cfg)

        def f(theta):
            return loss_and_grad(PolicyParams.from_flat(theta, p), obs, acts, old, adv, ret, bounds, cfg)[0]

        worst = max(worst, relative_error(g, finite_difference(f, p.flat())))
    elapsed = time.perf_counter() - t0
    verdict("AC-8", worst < 1e-4 and elapsed < 60.0, f"max relative error {worst:.1e} over 100 trials (< 1e-4); {elapsed:.1f} s")


# -- AC-9 ------------------------------------------------------------------------


def test_ac9_reward_telescopes():
    rng = np.random.default_rng(9)
    w = RewardWeights()
    worst = 0.0
    for ep in range(100):
        mode = Mode.PROJECTED if ep % 2 == 0 else Mode.RAW
        s = generate((Family.LEFT_TURN, Family.FORWARD_BOTTLENECK, Family.RIGHT_TURN)[ep % 3], 9000 + ep, ScenarioParams(check_feasibility=False))
        env = TransportEnv(s, mode, w, EnvConfig(collision_as_timeout=False))
        start, _ = env.reset()
        total = shaping = 0.0
        tau = 0
        while True:
            a = rng.uniform([-0.5, -1, -1.5, -1.5, -1.5], [1, 1, 1.5, 1.5, 1.5])
            res = env.step(TeamAction(PayloadTwist(Vec2(a[0], a[1]), a[2]), (a[3], a[4])))
            total += res.reward
            shaping += sum(v.x - abs(v.y) for v in res.info["robot_frame_velocities"])
            tau += 1
            if res.terminated or res.truncated:
                break
        d0 = math.dist(start.payload.position.as_tuple(), s.goal.as_tuple())
        d1 = math.dist(res.next_state.payload.position.as_tuple(), s.goal.as_tuple())
        worst = max(worst, abs(total - (-tau + w.lambda1 * (d0 - d1) + w.lambda2 * shaping)))
    verdict("AC-9", worst < 1e-9, f"max |return - (-tau + l1*(d_start - d_final) + l2*sum R_vel)| = {worst:.1e} over 100 episodes (< 1e-9)")


# -- AC-10 -----------------------------------------------------------------------


def test_ac10_planner_optimality():
    families = (Family.LEFT_TURN, Family.FORWARD_BOTTLENECK, Family.RIGHT_TURN, Family.STRAIGHT)
    mismatched = []
    feasible = 0
    for i in range(50):
        s = generate(families[i % 4], 10_000 + i, ScenarioParams(check_feasibility=False))
        a, d = astar_plan(s), dijkstra_plan(s)
        feasible += a.feasible
        if a.feasible != d.feasible or (a.feasible and a.cost != d.cost):
            mismatched.append(s.name)
    s = generate(Family.FORWARD_BOTTLENECK, 10_100)
    increases = []
    for seed in range(20):
        costs = [rrtstar_plan(s, n, seed).cost for n in (250, 500, 1000, 2000)]
        if any(b > a for a, b in zip(costs, costs[1:])):
            increases.append(seed)
    verdict(
        "AC-10",
        not mismatched and not increases,
        f"A* == Dijkstra cost on {50 - len(mismatched)}/50 scenarios ({feasible} feasible); "
        f"RRT* cost non-increasing over 250..2000 iterations on {20 - len(increases)}/20 seeds",
    )


# -- AC-11 -----------------------------------------------------------------------


def _cli(*args, cwd):
    env = {**os.environ, "DQCT_THREADS": "1", "PYTHONPATH": str(ROOT / "src")}
    out = subprocess.run([sys.executable, "-m", "dqct.cli", *args], cwd=cwd, env=env, capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    return out


def test_ac11_determinism(tmp_path):
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        _cli("gen-scenarios", "--family", "left", "--count", "5", "--seed", "11", "--out-dir", "scen", cwd=d)
        _cli("train", "--scenario-dir", "scen", "--out", "policy.json", "--steps", "1000", "--seed", "3", "--quiet", cwd=d)
        for method in ("blct", "astar", "rrtstar"):
            _cli(
                "eval", "--method", method, "--checkpoint", "policy.json", "--scenario-dir", "scen",
                "--out", f"{method}.csv", "--seed", "5", "--timing", "off", "--rrt-iterations", "500", cwd=d,
            )
        files = sorted(p for p in d.rglob("*") if p.is_file())
        outputs.append({p.relative_to(d).as_posix(): p.read_bytes() for p in files})
    same = outputs[0] == outputs[1]
    names = sorted(outputs[0])
    differing = [n for n in names if outputs[0].get(n) != outputs[1].get(n)]
    verdict(
        "AC-11",
        same and len(names) >= 5 + 2 + 9,
        f"{len(names)} files (scenarios, checkpoint, curve, metric/table/episode CSVs) byte-identical across two runs"
        + (f"; differing: {differing}" if differing else ""),
    )
