import json
import math

import numpy as np
import pytest

from dqct.geometry import Vec2, clearance_ray
from dqct.scenario import (
    Family,
    Scenario,
    ScenarioError,
    ScenarioFormatError,
    ScenarioParams,
    dumps,
    generate,
    generate_batch,
    load,
    loads,
    save,
    to_dict,
)

TURNS = (Family.LEFT_TURN, Family.RIGHT_TURN)


def _free_segment(s: Scenario, a: Vec2, b: Vec2) -> bool:
    d = b - a
    return clearance_ray(a, math.atan2(d.y, d.x), s.boundaries, d.norm() + 1.0) > d.norm()


def test_generate_is_deterministic():
    a = generate(Family.LEFT_TURN, 7)
    b = generate(Family.LEFT_TURN, 7)
    assert a == b
    assert dumps(a) == dumps(b)


def test_families_differ_for_same_seed():
    assert generate(Family.LEFT_TURN, 3) != generate(Family.RIGHT_TURN, 3)


@pytest.mark.parametrize("family", [Family.LEFT_TURN, Family.FORWARD_BOTTLENECK, Family.RIGHT_TURN])
def test_batch_of_100_distinct(family):
    batch = generate_batch(family, 100, 1, ScenarioParams(check_feasibility=False))
    assert len({dumps(s) for s in batch}) == 100
    for s in batch:
        assert 4 <= len(s.boundaries) <= 8
        assert not s.state_collides(s.initial_state(), 0.02)


@pytest.mark.parametrize("family", TURNS)
def test_turn_has_one_junction_with_direction(family):
    for seed in range(20):
        s = generate(family, seed, ScenarioParams(check_feasibility=False))
        assert not _free_segment(s, s.start, s.goal)
        corner = Vec2(s.goal.x, s.start.y)
        assert _free_segment(s, s.start, corner)
        assert _free_segment(s, corner, s.goal)
        turn = (corner - s.start).cross(s.goal - corner)
        assert (turn > 0) == (family is Family.LEFT_TURN)
        # the two legs are perpendicular
        assert abs((corner - s.start).dot(s.goal - corner)) < 1e-9


def test_some_turns_narrower_than_payload():
    widths = []
    for seed in range(50):
        s = generate(Family.LEFT_TURN, seed, ScenarioParams(check_feasibility=False))
        up = clearance_ray(Vec2(s.start.x, 0.0), math.pi / 2, s.boundaries, 10)
        down = clearance_ray(Vec2(s.start.x, 0.0), -math.pi / 2, s.boundaries, 10)
        widths.append(up + down)
    assert min(widths) < generate(Family.LEFT_TURN, 0).payload_length


def test_bottleneck_has_exactly_one_neck():
    for seed in range(10):
        s = generate(Family.FORWARD_BOTTLENECK, seed, ScenarioParams(check_feasibility=False))
        xs = np.linspace(s.start.x, s.goal.x, 120)
        widths = []
        for x in xs:
            # widest vertical free extent through any free probe point inside the corridor
            best = 0.0
            for y in np.linspace(-1.0, 1.0, 21):
                p = Vec2(float(x), float(y))
                if any(b.contains(p) for b in s.boundaries):
                    continue
                w = clearance_ray(p, math.pi / 2, s.boundaries, 10) + clearance_ray(p, -math.pi / 2, s.boundaries, 10)
                if w < 10.0:  # probes outside the outer walls see nothing
                    best = max(best, w)
            widths.append(best)
        widths = np.array(widths)
        entry = widths[0]
        narrow = widths < entry - 1e-6
        runs = int(np.sum(np.diff(narrow.astype(int)) == 1) + (1 if narrow[0] else 0))
        assert runs == 1


def test_round_trip(tmp_path):
    for family in Family:
        s = generate(family, 11)
        path = tmp_path / f"{s.name}.json"
        save(s, path)
        assert load(path) == s
        text = path.read_text()
        assert text.startswith("//")
        assert "units" in text


def test_missing_goal_is_reported(tmp_path):
    d = to_dict(generate(Family.LEFT_TURN, 2))
    del d["goal"]
    with pytest.raises(ScenarioFormatError, match="goal"):
        loads(json.dumps(d))


def test_negative_half_dims_names_field():
    d = to_dict(generate(Family.LEFT_TURN, 2))
    d["boundaries"][1]["half_dims"] = [-0.1, 0.2]
    with pytest.raises(ScenarioFormatError, match=r"boundaries\[1\]\.half_dims"):
        loads(json.dumps(d))


def test_malformed_json_reports_position():
    with pytest.raises(ScenarioFormatError, match=r"<string>:\d+:\d+"):
        loads('{"family": "left",\n  "seed": }')


def test_invalid_ranges_rejected():
    with pytest.raises(ScenarioError):
        generate(Family.LEFT_TURN, 1, ScenarioParams(corridor_width=(1.5, 1.0)))
    with pytest.raises(ScenarioError):
        generate(Family.LEFT_TURN, 1, ScenarioParams(corridor_width=(0.2, 1.0)))


def test_retry_exhaustion_errors():
    # corridors that cannot hold a robot sideways with this heading jitter
    params = ScenarioParams(
        corridor_width=(0.31, 0.32), heading_jitter=1.5, max_retries=3, check_feasibility=False
    )
    with pytest.raises(ScenarioError, match="collision-free start"):
        generate(Family.LEFT_TURN, 1, params)


def test_seed_range_checked():
    with pytest.raises(ScenarioError):
        generate(Family.LEFT_TURN, -1)


def test_planner_feasibility_flag_recorded():
    flags = [generate(Family.FORWARD_BOTTLENECK, seed).planner_feasible for seed in range(5)]
    assert all(isinstance(f, bool) for f in flags)
