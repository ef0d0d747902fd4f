"""
Procedural corridor scenarios and their JSON file format.

Every family is laid out in a canonical frame: the team starts in an entry
corridor running along +x. Turn families then continue into an exit corridor
along +y (left) or -y (right); the bottleneck family narrows once and keeps
going along +x. Walls are axis-aligned boxes of fixed thickness.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .collision import pack_boxes, team_collides
from .geometry import OrientedBox, Pose2, Vec2
from .kinematics import KinematicLimits, TeamState

FORMAT_VERSION = 1
COLLISION_MARGIN = 0.02

# 45 in bar with a 4 x 1.5 in cross-section
DEFAULT_PAYLOAD_LENGTH = 1.143
DEFAULT_PAYLOAD_HALF_DIMS = Vec2(0.0508, 0.019)
DEFAULT_ROBOT_HALF_DIMS = Vec2(0.35, 0.15)
DEFAULT_LIMITS = KinematicLimits(Vec2(1.0, 0.4), 1.5)


class Family(enum.Enum):
    LEFT_TURN = "left"
    FORWARD_BOTTLENECK = "forward"
    RIGHT_TURN = "right"
    STRAIGHT = "straight"

    @classmethod
    def parse(cls, name: str) -> Family:
        aliases = {
            "left": cls.LEFT_TURN,
            "leftturn": cls.LEFT_TURN,
            "forward": cls.FORWARD_BOTTLENECK,
            "bottleneck": cls.FORWARD_BOTTLENECK,
            "forwardbottleneck": cls.FORWARD_BOTTLENECK,
            "right": cls.RIGHT_TURN,
            "rightturn": cls.RIGHT_TURN,
            "straight": cls.STRAIGHT,
        }
        key = name.lower().replace("_", "").replace("-", "")
        if key not in aliases:
            raise ValueError(f"unknown scenario family {name!r}")
        return aliases[key]


FAMILY_INDEX = {f: i for i, f in enumerate(Family)}


class ScenarioError(ValueError):
    pass


class ScenarioFormatError(ScenarioError):
    pass


@dataclass(frozen=True)
class Scenario:
    boundaries: tuple[OrientedBox, ...]
    start: Vec2
    goal: Vec2
    start_heading: float
    payload_length: float = DEFAULT_PAYLOAD_LENGTH
    payload_half_dims: Vec2 = DEFAULT_PAYLOAD_HALF_DIMS
    robot_half_dims: Vec2 = DEFAULT_ROBOT_HALF_DIMS
    limits: KinematicLimits = DEFAULT_LIMITS
    family: Family = Family.STRAIGHT
    seed: int = 0
    planner_feasible: bool | None = None
    _packed: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.boundaries) < 1:
            raise ScenarioError("a scenario needs at least one boundary box")
        if not self.payload_length > 0.0:
            raise ScenarioError("payload_length must be positive")
        object.__setattr__(self, "boundaries", tuple(self.boundaries))
        object.__setattr__(self, "start_heading", Pose2(Vec2(0.0, 0.0), self.start_heading).heading)

    @property
    def name(self) -> str:
        return f"{self.family.value}_{self.seed:06d}"

    @property
    def bar_half_dims(self) -> Vec2:
        """Footprint of the bar: half its length along the axis, half its width across."""
        return Vec2(0.5 * self.payload_length, self.payload_half_dims.x)

    def walls(self, margin: float = 0.0) -> np.ndarray:
        """Packed boundary array, cached per margin."""
        key = float(margin)
        if key not in self._packed:
            self._packed[key] = pack_boxes(self.boundaries, margin)
        return self._packed[key]

    def shape(self) -> np.ndarray:
        return np.array(
            [0.5 * self.payload_length, self.payload_half_dims.x, self.robot_half_dims.x, self.robot_half_dims.y]
        )

    def initial_state(self) -> TeamState:
        return TeamState(
            Pose2(self.start, self.start_heading),
            self.bar_half_dims,
            (self.start_heading, self.start_heading),
            self.robot_half_dims,
        )

    def state_collides(self, state: TeamState, margin: float = 0.0) -> bool:
        return bool(team_collides(*state.pose_row(), self.shape(), self.walls(margin)))

    def bounds(self) -> tuple[float, float, float, float]:
        """Axis-aligned hull ``(xmin, xmax, ymin, ymax)`` of all boundary boxes."""
        w = self.walls()
        return (
            float(np.min(w[:, 0] - w[:, 6])),
            float(np.max(w[:, 0] + w[:, 6])),
            float(np.min(w[:, 1] - w[:, 7])),
            float(np.max(w[:, 1] + w[:, 7])),
        )


@dataclass(frozen=True)
class ScenarioParams:
    """Sampling ranges for scenario generation (meters / radians)."""

    corridor_width: tuple[float, float] = (0.7, 1.6)
    neck_width: tuple[float, float] = (0.85, 1.3)
    bottleneck_extra_width: tuple[float, float] = (0.3, 0.8)
    neck_length: tuple[float, float] = (0.4, 1.0)
    straight_width: tuple[float, float] = (1.0, 1.6)
    start_distance: tuple[float, float] = (1.2, 2.2)
    goal_distance: tuple[float, float] = (0.8, 1.8)
    straight_goal_distance: tuple[float, float] = (2.0, 4.0)
    lateral_jitter: float = 0.1
    heading_jitter: float = 0.3
    bottleneck_heading_jitter: float = math.pi / 2
    wall_thickness: float = 0.3
    entry_slack: float = 0.4
    exit_slack: float = 0.4
    payload_length: float = DEFAULT_PAYLOAD_LENGTH
    payload_half_dims: Vec2 = DEFAULT_PAYLOAD_HALF_DIMS
    robot_half_dims: Vec2 = DEFAULT_ROBOT_HALF_DIMS
    limits: KinematicLimits = DEFAULT_LIMITS
    margin: float = COLLISION_MARGIN
    max_retries: int = 200
    check_feasibility: bool = True

    def validate(self) -> None:
        for name in (
            "corridor_width",
            "neck_width",
            "bottleneck_extra_width",
            "neck_length",
            "straight_width",
            "start_distance",
            "goal_distance",
            "straight_goal_distance",
        ):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi):
                raise ScenarioError(f"{name}: need 0 < low <= high, got ({lo}, {hi})")
        min_width = 2.0 * self.robot_half_dims.y
        for name in ("corridor_width", "neck_width", "straight_width"):
            if getattr(self, name)[0] <= min_width:
                raise ScenarioError(f"{name}: minimum width must exceed the robot width {min_width}")
        if self.wall_thickness <= 0.0 or self.max_retries < 1 or self.margin < 0.0:
            raise ScenarioError("wall_thickness, max_retries and margin must be positive")


def _box(x0: float, x1: float, y0: float, y1: float) -> OrientedBox:
    return OrientedBox(Vec2(0.5 * (x0 + x1), 0.5 * (y0 + y1)), 0.0, Vec2(0.5 * (x1 - x0), 0.5 * (y1 - y0)))


def _mirror_y(box: OrientedBox) -> OrientedBox:
    return OrientedBox(Vec2(box.center.x, -box.center.y), -box.heading, box.half_dims)


def _reach(p: ScenarioParams) -> float:
    # payload center to the tip of a robot footprint when the team is in single file
    return 0.5 * p.payload_length + p.robot_half_dims.x


def _layout_turn(rng: np.random.Generator, p: ScenarioParams, left: bool):
    t = p.wall_thickness
    w_in = rng.uniform(*p.corridor_width)
    w_out = rng.uniform(*p.corridor_width)
    d_start = rng.uniform(*p.start_distance)
    d_goal = rng.uniform(*p.goal_distance)
    len_in = d_start + _reach(p) + p.entry_slack
    len_out = d_goal + _reach(p) + p.exit_slack
    y_lo, y_hi = -0.5 * w_in, 0.5 * w_in
    y_top = y_hi + len_out
    walls = [
        _box(-len_in - t, w_out + t, y_lo - t, y_lo),  # outer wall along the entry
        _box(w_out, w_out + t, y_lo - t, y_top + t),  # outer wall along the exit
        _box(-len_in - t, 0.0, y_hi, y_hi + t),  # inner wall of the entry
        _box(-t, 0.0, y_hi, y_top + t),  # inner wall of the exit
        _box(-len_in - t, -len_in, y_lo - t, y_hi + t),  # entry cap
        _box(-t, w_out + t, y_top, y_top + t),  # exit cap
    ]
    jitter = min(p.lateral_jitter, 0.25 * w_in)
    start = Vec2(-d_start, rng.uniform(-jitter, jitter))
    heading = rng.uniform(-p.heading_jitter, p.heading_jitter)
    gx = 0.5 * w_out + rng.uniform(-1.0, 1.0) * min(p.lateral_jitter, 0.25 * w_out)
    goal = Vec2(gx, y_hi + d_goal)
    if not left:
        walls = [_mirror_y(b) for b in walls]
        start = Vec2(start.x, -start.y)
        goal = Vec2(goal.x, -goal.y)
        heading = -heading
    return walls, start, goal, heading


def _layout_bottleneck(rng: np.random.Generator, p: ScenarioParams):
    t = p.wall_thickness
    w_neck = rng.uniform(*p.neck_width)
    w = w_neck + rng.uniform(*p.bottleneck_extra_width)
    neck_len = rng.uniform(*p.neck_length)
    shift = rng.uniform(-0.5, 0.5) * 0.5 * (w - w_neck)
    d_start = rng.uniform(*p.start_distance)
    d_goal = rng.uniform(*p.goal_distance)
    len_in = d_start + _reach(p) + p.entry_slack
    x_end = neck_len + d_goal + _reach(p) + p.exit_slack
    y_lo, y_hi = -0.5 * w, 0.5 * w
    walls = [
        _box(-len_in - t, x_end + t, y_lo - t, y_lo),
        _box(-len_in - t, x_end + t, y_hi, y_hi + t),
        _box(-len_in - t, -len_in, y_lo - t, y_hi + t),
        _box(x_end, x_end + t, y_lo - t, y_hi + t),
        _box(0.0, neck_len, shift + 0.5 * w_neck, y_hi),
        _box(0.0, neck_len, y_lo, shift - 0.5 * w_neck),
    ]
    jitter = min(p.lateral_jitter, 0.25 * w)
    start = Vec2(-d_start, rng.uniform(-jitter, jitter))
    heading = rng.uniform(-p.bottleneck_heading_jitter, p.bottleneck_heading_jitter)
    goal = Vec2(neck_len + d_goal, rng.uniform(-jitter, jitter))
    return walls, start, goal, heading


def _layout_straight(rng: np.random.Generator, p: ScenarioParams):
    t = p.wall_thickness
    w = rng.uniform(*p.straight_width)
    d_goal = rng.uniform(*p.straight_goal_distance)
    len_in = _reach(p) + p.entry_slack
    x_end = d_goal + _reach(p) + p.exit_slack
    y_lo, y_hi = -0.5 * w, 0.5 * w
    walls = [
        _box(-len_in - t, x_end + t, y_lo - t, y_lo),
        _box(-len_in - t, x_end + t, y_hi, y_hi + t),
        _box(-len_in - t, -len_in, y_lo - t, y_hi + t),
        _box(x_end, x_end + t, y_lo - t, y_hi + t),
    ]
    jitter = min(p.lateral_jitter, 0.25 * w)
    start = Vec2(0.0, rng.uniform(-jitter, jitter))
    heading = rng.uniform(-p.heading_jitter, p.heading_jitter)
    goal = Vec2(d_goal, rng.uniform(-jitter, jitter))
    return walls, start, goal, heading


def generate(family: Family | str, seed: int, params: ScenarioParams | None = None) -> Scenario:
    """Deterministic scenario for ``(family, seed, params)``.

    Samples are redrawn from the same seeded stream until the start
    configuration clears every margin-inflated wall.
    """
    family = Family.parse(family) if isinstance(family, str) else family
    p = params or ScenarioParams()
    p.validate()
    if not 0 <= seed < 2**64:
        raise ScenarioError("seed must be an unsigned 64-bit integer")
    rng = np.random.default_rng([seed, FAMILY_INDEX[family]])
    for _ in range(p.max_retries):
        if family is Family.LEFT_TURN:
            walls, start, goal, heading = _layout_turn(rng, p, left=True)
        elif family is Family.RIGHT_TURN:
            walls, start, goal, heading = _layout_turn(rng, p, left=False)
        elif family is Family.FORWARD_BOTTLENECK:
            walls, start, goal, heading = _layout_bottleneck(rng, p)
        else:
            walls, start, goal, heading = _layout_straight(rng, p)
        s = Scenario(
            tuple(walls),
            start,
            goal,
            float(heading),
            payload_length=p.payload_length,
            payload_half_dims=p.payload_half_dims,
            robot_half_dims=p.robot_half_dims,
            limits=p.limits,
            family=family,
            seed=seed,
        )
        if not s.state_collides(s.initial_state(), p.margin):
            break
    else:
        raise ScenarioError(f"no collision-free start after {p.max_retries} draws ({family.value}, seed {seed})")
    if p.check_feasibility:
        from .baselines.lattice import coarse_feasible

        s = replace(s, planner_feasible=coarse_feasible(s))
    return s


def generate_batch(family: Family | str, count: int, seed: int, params: ScenarioParams | None = None) -> list[Scenario]:
    """``count`` scenarios with consecutive seeds starting at ``seed``."""
    return [generate(family, seed + i, params) for i in range(count)]


# -- serialization ---------------------------------------------------------

HEADER = """\
// dqct scenario file
// units: positions, lengths and half-dimensions in meters; headings in radians;
//        v_max in m/s (robot frame: x forward, y lateral); omega_max in rad/s
// boundaries[].half_dims = (along heading, across heading)
// robot 1 is attached at the +x end of the payload, robot 2 at the -x end
"""


def _fmt(value: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ScenarioError(f"cannot serialize non-finite value {value}")
        return format(value, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        items = [f"{pad}{json.dumps(k)}: {_fmt(v, indent, level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple)):
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            return "[" + ", ".join(_fmt(v, indent, level + 1) for v in value) + "]"
        items = [pad + _fmt(v, indent, level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"unsupported value {value!r}")


def dumps_exact(obj: Any, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _fmt(obj, indent, 0)


def _vec(v: Vec2) -> list[float]:
    return [v.x, v.y]


def to_dict(s: Scenario) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "family": s.family.value,
        "seed": s.seed,
        "boundaries": [
            {"center": _vec(b.center), "heading": b.heading, "half_dims": _vec(b.half_dims)} for b in s.boundaries
        ],
        "start": _vec(s.start),
        "goal": _vec(s.goal),
        "start_heading": s.start_heading,
        "payload": {"length": s.payload_length, "half_dims": _vec(s.payload_half_dims)},
        "robots": {"half_dims": _vec(s.robot_half_dims)},
        "limits": {"v_max": _vec(s.limits.v_max), "omega_max": s.limits.omega_max},
        "planner_feasible": s.planner_feasible,
    }


def dumps(s: Scenario) -> str:
    return HEADER + dumps_exact(to_dict(s)) + "\n"


def save(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps(s))


def _get(d: Any, key: str, where: str) -> Any:
    if not isinstance(d, dict):
        raise ScenarioFormatError(f"field {where or '<root>'}: expected an object")
    if key not in d:
        raise ScenarioFormatError(f"missing field {where + '.' if where else ''}{key}")
    return d[key]


def _num(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioFormatError(f"field {where}: expected a finite number, got {value!r}")
    return float(value)


def _parse_vec(value: Any, where: str, positive: bool = False) -> Vec2:
    if not isinstance(value, list) or len(value) != 2:
        raise ScenarioFormatError(f"field {where}: expected a 2-element list, got {value!r}")
    x, y = _num(value[0], where), _num(value[1], where)
    if positive and not (x > 0.0 and y > 0.0):
        raise ScenarioFormatError(f"field {where}: components must be strictly positive, got {value!r}")
    return Vec2(x, y)


def from_dict(d: dict) -> Scenario:
    try:
        family = Family.parse(str(_get(d, "family", "")))
    except ValueError as exc:
        raise ScenarioFormatError(f"field family: {exc}") from None
    seed = _get(d, "seed", "")
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ScenarioFormatError(f"field seed: expected an unsigned 64-bit integer, got {seed!r}")
    raw_boxes = _get(d, "boundaries", "")
    if not isinstance(raw_boxes, list) or not raw_boxes:
        raise ScenarioFormatError("field boundaries: expected a non-empty list")
    boxes = []
    for i, b in enumerate(raw_boxes):
        where = f"boundaries[{i}]"
        boxes.append(
            OrientedBox(
                _parse_vec(_get(b, "center", where), where + ".center"),
                _num(_get(b, "heading", where), where + ".heading"),
                _parse_vec(_get(b, "half_dims", where), where + ".half_dims", positive=True),
            )
        )
    payload = _get(d, "payload", "")
    robots = _get(d, "robots", "")
    limits = _get(d, "limits", "")
    length = _num(_get(payload, "length", "payload"), "payload.length")
    if length <= 0.0:
        raise ScenarioFormatError(f"field payload.length: must be positive, got {length}")
    try:
        lim = KinematicLimits(
            _parse_vec(_get(limits, "v_max", "limits"), "limits.v_max", positive=True),
            _num(_get(limits, "omega_max", "limits"), "limits.omega_max"),
        )
    except ScenarioFormatError:
        raise
    except ValueError as exc:
        raise ScenarioFormatError(f"field limits: {exc}") from None
    feasible = d.get("planner_feasible")
    if feasible is not None and not isinstance(feasible, bool):
        raise ScenarioFormatError("field planner_feasible: expected true, false or null")
    return Scenario(
        tuple(boxes),
        _parse_vec(_get(d, "start", ""), "start"),
        _parse_vec(_get(d, "goal", ""), "goal"),
        _num(_get(d, "start_heading", ""), "start_heading"),
        payload_length=length,
        payload_half_dims=_parse_vec(_get(payload, "half_dims", "payload"), "payload.half_dims", positive=True),
        robot_half_dims=_parse_vec(_get(robots, "half_dims", "robots"), "robots.half_dims", positive=True),
        limits=lim,
        family=family,
        seed=seed,
        planner_feasible=feasible,
    )


def loads(text: str, source: str = "<string>") -> Scenario:
    lines = text.splitlines()
    skip = 0
    while skip < len(lines) and lines[skip].lstrip().startswith("//"):
        skip += 1
    body = "\n".join(lines[skip:])
    try:
        d = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{source}:{exc.lineno + skip}:{exc.colno}: {exc.msg}") from None
    try:
        return from_dict(d)
    except ScenarioFormatError as exc:
        raise ScenarioFormatError(f"{source}: {exc}") from None


def load(path: str | Path) -> Scenario:
    path = Path(path)
    return loads(path.read_text(), str(path))


def load_dir(directory: str | Path) -> list[Scenario]:
    """All ``*.json`` scenarios in a directory, in file-name order."""
    files = sorted(Path(directory).glob("*.json"))
    if not files:
        raise ScenarioError(f"no scenario files in {directory}")
    return [load(f) for f in files]
