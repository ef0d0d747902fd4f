"""
Batch evaluation, per-method metric tables and SVG trajectory replay.

Learned policies report the summed wall-clock time of their per-step
inference as planning time; planners report their one up-front planning
call. Time, execution time and path length are averaged over successful
episodes only.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .baselines import LatticeConfig, PathFollower, RRTConfig, astar_plan, rrtstar_plan
from .env import EnvConfig, Mode, TransportEnv, action_bounds
from .geometry import OrientedBox, Pose2, Vec2
from .kinematics import TeamState
from .lowlevel import TeamAction
from .policy.network import PolicyParams, deterministic_action
from .scenario import Family, Scenario, ScenarioFormatError, from_dict


class Method(enum.Enum):
    BLCT = "BLCT"
    RL = "RL"
    ASTAR = "AStar"
    RRTSTAR = "RRTStar"

    @classmethod
    def parse(cls, name: str) -> Method:
        key = name.lower().replace("*", "star").replace("-", "").replace("_", "")
        table = {"blct": cls.BLCT, "rl": cls.RL, "astar": cls.ASTAR, "rrtstar": cls.RRTSTAR}
        if key not in table:
            raise ValueError(f"unknown method {name!r} (choose from blct, rl, astar, rrtstar)")
        return table[key]

    @property
    def uses_policy(self) -> bool:
        return self in (Method.BLCT, Method.RL)

    @property
    def label(self) -> str:
        return {"AStar": "A*", "RRTStar": "RRT*"}.get(self.value, self.value)


@dataclass(frozen=True)
class EpisodeRecord:
    scenario_id: str
    family: str
    method: str
    repeat: int
    success: bool
    planning_time: float
    execution_time: float
    path_length: float
    steps: int
    stuck: bool
    collision: bool
    timeout: bool
    plan_feasible: bool

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class EvalConfig:
    env: EnvConfig = EnvConfig()
    lattice: LatticeConfig = LatticeConfig()
    rrt: RRTConfig = RRTConfig()
    rrt_iterations: int = 2000
    repeats: int = 1
    # wall-clock timing is the one non-deterministic metric; off records 0.0
    timing: bool = True


# -- episodes ----------------------------------------------------------------


def _displacement(a: TeamState, b: TeamState) -> float:
    return math.dist(a.payload.position.as_tuple(), b.payload.position.as_tuple())


def _run_episode(env: TransportEnv, controller, timing: bool) -> tuple[int, bool, bool, bool, float, float]:
    """Roll ``controller(state, obs) -> TeamAction`` to termination.

    Returns (steps, success, stuck_any, collision, path_length, time spent in the controller).
    """
    state, obs = env.reset()
    length = 0.0
    spent = 0.0
    stuck = False
    while True:
        if timing:
            t0 = time.perf_counter()
            action = controller(state, obs)
            spent += time.perf_counter() - t0
        else:
            action = controller(state, obs)
        res = env.step(action)
        length += _displacement(state, res.next_state)
        stuck = stuck or res.info["stuck"]
        state, obs = res.next_state, res.observation
        if res.terminated or res.truncated:
            return env.t, res.info["success"], stuck, res.info["collision"], length, spent


def _policy_controller(params: PolicyParams, bound: np.ndarray):
    def control(state, obs):
        return TeamAction.from_array(deterministic_action(params, obs.vector, bound))

    return control


def evaluate_one(
    method: Method,
    scenario: Scenario,
    params: PolicyParams | None,
    config: EvalConfig,
    seed: int,
    repeat: int = 0,
    log: IO[str] | None = None,
) -> EpisodeRecord:
    cfg = config.env
    plan_feasible = True
    if method.uses_policy:
        if params is None:
            raise ValueError(f"{method.value} evaluation needs a trained policy")
        mode = Mode.PROJECTED if method is Method.BLCT else Mode.RAW
        env = TransportEnv(scenario, mode, config=cfg, log=log)
        controller = _policy_controller(params, action_bounds(scenario))
        steps, ok, stuck, crash, length, spent = _run_episode(env, controller, config.timing)
        planning = spent
    else:
        if method is Method.ASTAR:
            plan = astar_plan(scenario, config.lattice)
        else:
            plan = rrtstar_plan(scenario, config.rrt_iterations, seed + repeat, config.rrt)
        planning = plan.planning_time if config.timing else 0.0
        plan_feasible = plan.feasible
        if log is not None:
            for rec in plan.to_records():
                log.write(json.dumps(rec) + "\n")
        if not plan.feasible:
            return EpisodeRecord(
                scenario.name, scenario.family.value, method.value, repeat, False, planning, 0.0, 0.0, 0, False, False, False, False
            )
        env = TransportEnv(scenario, Mode.PROJECTED, config=cfg, log=log)
        follower = PathFollower(plan, scenario.limits)
        steps, ok, stuck, crash, length, _ = _run_episode(env, lambda s, o: follower(s), False)
    timeout = not ok and not crash
    return EpisodeRecord(
        scenario.name,
        scenario.family.value,
        method.value,
        repeat,
        bool(ok),
        float(planning),
        steps * cfg.dt,
        float(length),
        int(steps),
        bool(stuck),
        bool(crash),
        bool(timeout),
        plan_feasible,
    )


def evaluate(
    method: Method | str,
    params: PolicyParams | None,
    scenarios: Sequence[Scenario],
    seed: int = 0,
    config: EvalConfig = EvalConfig(),
    log_dir: str | Path | None = None,
    threads: int = 1,
) -> list[EpisodeRecord]:
    """One record per (scenario, repeat), sorted by scenario id then repeat."""
    method = Method.parse(method) if isinstance(method, str) else method
    if method.uses_policy and params is None:
        raise ValueError(f"{method.value} evaluation needs a trained policy checkpoint")
    if log_dir is not None:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
    jobs = [(s, r) for s in scenarios for r in range(config.repeats)]

    def run(job):
        s, r = job
        if log_dir is None:
            return evaluate_one(method, s, params, config, seed, r)
        path = Path(log_dir) / f"{s.name}_{method.value}_r{r}.jsonl"
        with path.open("w") as fh:
            return evaluate_one(method, s, params, config, seed, r, fh)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(j) for j in jobs]
    return sorted(records, key=lambda rec: (rec.scenario_id, rec.repeat))


# -- aggregation -------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRow:
    method: str
    family: str
    episodes: int
    successes: int
    success_rate: float  # percent
    planning_time: float
    execution_time: float
    path_length: float


def _mean(xs: list[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else math.nan


class MetricsTable:
    """Per (method, family) aggregates; timing and length use successful episodes only."""

    def __init__(self, rows: list[MetricsRow]):
        self.rows = sorted(rows, key=lambda r: (r.method, r.family))

    @classmethod
    def from_records(cls, records: Sequence[EpisodeRecord]) -> MetricsTable:
        groups: dict[tuple[str, str], list[EpisodeRecord]] = {}
        for rec in sorted(records, key=lambda r: (r.method, r.family, r.scenario_id, r.repeat)):
            groups.setdefault((rec.method, rec.family), []).append(rec)
        rows = []
        for (method, family), recs in groups.items():
            ok = [r for r in recs if r.success]
            rows.append(
                MetricsRow(
                    method,
                    family,
                    len(recs),
                    len(ok),
                    100.0 * len(ok) / len(recs),
                    _mean([r.planning_time for r in ok]),
                    _mean([r.execution_time for r in ok]),
                    _mean([r.path_length for r in ok]),
                )
            )
        return cls(rows)

    def get(self, method: str, family: str) -> MetricsRow | None:
        for r in self.rows:
            if r.method == method and r.family == family:
                return r
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = [f.name for f in fields(MetricsRow)]
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_cell(getattr(r, c)) for c in cols])
        return buf.getvalue()

    def to_markdown(self) -> str:
        """Methods as rows; metric groups by family as columns."""
        families = [f.value for f in Family if any(r.family == f.value for r in self.rows)]
        order = [m.value for m in Method if any(r.method == m.value for r in self.rows)]
        metrics = [
            ("Success Rate", "success_rate", lambda v: f"{v:.0f}%"),
            ("Planning Time (s)", "planning_time", lambda v: f"{v:.4f}"),
            ("Execution Time (s)", "execution_time", lambda v: f"{v:.4f}"),
            ("Total Path Length (m)", "path_length", lambda v: f"{v:.4f}"),
        ]
        head = ["Method"] + [f"{title}: {fam}" for title, _, _ in metrics for fam in families]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for m in order:
            cells = [Method(m).label]
            for _, key, fmt in metrics:
                for fam in families:
                    row = self.get(m, fam)
                    v = getattr(row, key) if row is not None else math.nan
                    cells.append("n/a" if math.isnan(v) else fmt(v))
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        # shortest repr round-trips exactly
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def records_to_csv(records: Sequence[EpisodeRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = EpisodeRecord.columns()
    w.writerow(cols)
    for rec in records:
        w.writerow([_cell(getattr(rec, c)) for c in cols])
    return buf.getvalue()


def records_from_csv(text: str) -> list[EpisodeRecord]:
    out = []
    types = {f.name: f.type for f in fields(EpisodeRecord)}
    for row in csv.DictReader(io.StringIO(text)):
        kw = {}
        for name, typ in types.items():
            raw = row[name]
            if typ in ("bool", bool):
                kw[name] = raw == "true"
            elif typ in ("int", int):
                kw[name] = int(raw)
            elif typ in ("float", float):
                kw[name] = float(raw)
            else:
                kw[name] = raw
        out.append(EpisodeRecord(**kw))
    return out


# -- replay ------------------------------------------------------------------


class ReplayError(ValueError):
    pass


@dataclass
class Replay:
    scenario: Scenario
    frames: list[tuple[float, float, float, float, float]]  # payload x, y, heading, robot headings
    plan: list[tuple[float, float]]
    success: bool


def read_log(path: str | Path) -> Replay:
    path = Path(path)
    scenario = None
    frames = []
    plan = []
    success = False
    with path.open() as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind = rec["kind"]
                if kind == "scenario":
                    scenario = from_dict(rec["scenario"])
                elif kind in ("reset", "step"):
                    x, y, th = (float(v) for v in rec["payload"])
                    h1, h2 = (float(v) for v in rec["robot_headings"])
                    frames.append((x, y, th, h1, h2))
                    success = success or bool(rec.get("success", False))
                elif kind == "plan":
                    x, y, _ = rec["payload"]
                    plan.append((float(x), float(y)))
                else:
                    raise ReplayError(f"{path}:{n}: unknown record kind {kind!r}")
            except ReplayError:
                raise
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, ScenarioFormatError) as exc:
                raise ReplayError(f"{path}:{n}: malformed log record ({exc})") from None
    if scenario is None:
        raise ReplayError(f"{path}: log has no scenario record")
    return Replay(scenario, frames, plan, success)


def _poly(box: OrientedBox, to_svg, **attrs) -> str:
    pts = " ".join(f"{u:.4f},{v:.4f}" for u, v in (to_svg(c) for c in box.corners()))
    extra = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in attrs.items())
    return f'<polygon points="{pts}" {extra}/>'


def render_replay(log_path: str | Path, out_path: str | Path, max_frames: int = 20, scale: float = 60.0) -> None:
    """Write an SVG of the scene, sampled team footprints and the payload path."""
    rep = read_log(log_path)
    s = rep.scenario
    x0, x1, y0, y1 = s.bounds()
    pad = 0.5
    x0, x1, y0, y1 = x0 - pad, x1 + pad, y0 - pad, y1 + pad
    width = (x1 - x0) * scale
    height = (y1 - y0) * scale

    def to_svg(p: Vec2) -> tuple[float, float]:
        return (p.x - x0) * scale, (y1 - p.y) * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1f}" height="{height:.1f}" '
        f'viewBox="0 0 {width:.4f} {height:.4f}">',
        f'<rect x="0" y="0" width="{width:.4f}" height="{height:.4f}" fill="white"/>',
        '<g id="boundaries">',
    ]
    for box in s.boundaries:
        out.append(_poly(box, to_svg, fill="#555555", stroke="none"))
    out.append("</g>")

    gx, gy = to_svg(s.goal)
    sx, sy = to_svg(s.start)
    out.append(
        f'<circle id="goal" cx="{gx:.4f}" cy="{gy:.4f}" r="{0.15 * scale:.4f}" fill="none" stroke="#2a9d2a" stroke-width="2"/>'
    )
    out.append(f'<circle id="start" cx="{sx:.4f}" cy="{sy:.4f}" r="4" fill="#1f5fbf"/>')

    if rep.plan:
        pts = " ".join(f"{u:.4f},{v:.4f}" for u, v in (to_svg(Vec2(x, y)) for x, y in rep.plan))
        out.append(f'<polyline id="plan" points="{pts}" fill="none" stroke="#999999" stroke-dasharray="4 3"/>')

    if rep.frames:
        n = len(rep.frames)
        picks = sorted({round(i * (n - 1) / max(1, max_frames - 1)) for i in range(min(n, max_frames))})
        out.append('<g id="footprints">')
        for i in picks:
            x, y, th, h1, h2 = rep.frames[i]
            state = TeamState(Pose2(Vec2(x, y), th), s.bar_half_dims, (h1, h2), s.robot_half_dims)
            pb, r1, r2 = state.boxes()
            out.append(_poly(r1, to_svg, fill="#f4a261", fill_opacity="0.35", stroke="#c4661f"))
            out.append(_poly(r2, to_svg, fill="#e9c46a", fill_opacity="0.35", stroke="#b08a1f"))
            out.append(_poly(pb, to_svg, fill="#264653", stroke="none"))
        out.append("</g>")
        pts = " ".join(f"{u:.4f},{v:.4f}" for u, v in (to_svg(Vec2(f[0], f[1])) for f in rep.frames))
        out.append(f'<polyline id="path" points="{pts}" fill="none" stroke="#d62828" stroke-width="2"/>')
        ex, ey = to_svg(Vec2(rep.frames[-1][0], rep.frames[-1][1]))
        out.append(f'<circle id="end" cx="{ex:.4f}" cy="{ey:.4f}" r="3" fill="#d62828"/>')
    out.append("</svg>")
    Path(out_path).write_text("\n".join(out) + "\n")
