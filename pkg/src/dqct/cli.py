"""Command-line entry point: ``dqct <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .config import ConfigError, load_eval_config, load_train_config
from .env import ACTION_DIM, OBS_DIM, Mode
from .harness import Method, MetricsTable, ReplayError, evaluate, records_to_csv, render_replay
from .policy.network import CheckpointError, load_checkpoint
from .policy.ppo import PPOError
from .policy.train import thread_count, train
from .scenario import Family, ScenarioError, generate_batch, load_dir, save


def _gen(args) -> int:
    family = Family.parse(args.family)
    if args.count < 1:
        raise ValueError("--count must be at least 1")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenarios = generate_batch(family, args.count, args.seed)
    for s in scenarios:
        save(s, out / f"{s.name}.json")
    feasible = sum(s.planner_feasible for s in scenarios)
    print(f"wrote {len(scenarios)} {family.value} scenarios to {out} ({feasible} planner-feasible)")
    return 0


def _load_scenarios(dirs: list[str]):
    scenarios = []
    for d in dirs:
        if not Path(d).is_dir():
            raise FileNotFoundError(f"scenario directory not found: {d}")
        scenarios += load_dir(d)
    if not scenarios:
        raise ScenarioError(f"no scenario files in {', '.join(dirs)}")
    return scenarios


def _train(args) -> int:
    cfg, env_cfg, weights = load_train_config(args.config)
    overrides = {k: v for k, v in (("total_steps", args.steps), ("seed", args.seed)) if v is not None}
    if overrides:
        cfg = type(cfg).from_dict({**cfg.to_dict(), **overrides})
    scenarios = _load_scenarios(args.scenario_dir)
    mode = Mode.parse(args.mode)

    def report(row):
        if not args.quiet:
            print(
                f"iter {row['iteration']:4d}  steps {row['env_steps']:8d}  "
                f"return {row['mean_return']:9.2f}  success {row['success_rate']:.3f}  kl {row['kl']:.4f}",
                flush=True,
            )

    curve = args.curve or str(Path(args.out).with_suffix(".curve.csv"))
    _, rows = train(scenarios, cfg, mode, weights, env_cfg, curve, args.out, threads=thread_count(), progress=report)
    flagged = [r["iteration"] for r in rows if r["kl"] >= 0.2]
    if flagged:
        print(f"warning: approximate KL >= 0.2 in iteration(s) {flagged}", file=sys.stderr)
    print(f"checkpoint {args.out}, training curve {curve}")
    return 0


def _eval(args) -> int:
    method = Method.parse(args.method)
    config = load_eval_config(args.config)
    overrides = {}
    if args.repeats is not None:
        if args.repeats < 1:
            raise ValueError("--repeats must be at least 1")
        overrides["repeats"] = args.repeats
    if args.timing is not None:
        overrides["timing"] = args.timing == "on"
    if args.rrt_iterations is not None:
        overrides["rrt_iterations"] = args.rrt_iterations
    if overrides:
        config = type(config)(**{**config.__dict__, **overrides})
    params = None
    if method.uses_policy:
        if args.checkpoint is None:
            raise ValueError(f"--checkpoint is required for method {method.value}")
        params = load_checkpoint(args.checkpoint, OBS_DIM, ACTION_DIM)
    scenarios = _load_scenarios(args.scenario_dir)
    records = evaluate(method, params, scenarios, args.seed, config, args.log_dir, threads=thread_count())
    table = MetricsTable.from_records(records)
    out_csv = Path(args.out)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    out_csv.write_text(table.to_csv())
    md = Path(args.markdown) if args.markdown else out_csv.with_suffix(".md")
    md.write_text(table.to_markdown())
    episodes = Path(args.episodes) if args.episodes else out_csv.with_suffix(".episodes.csv")
    episodes.write_text(records_to_csv(records))
    print(table.to_markdown(), end="")
    print(f"metrics {out_csv}, table {md}, episodes {episodes}")
    return 0


def _replay(args) -> int:
    log = args.log or resources.files("dqct") / "data" / "sample_rollout.jsonl"
    render_replay(log, args.out, max_frames=args.frames)
    print(f"wrote {args.out}")
    return 0


def _selftest(args) -> int:
    from .selftest import run

    return 0 if run() else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dqct", description="Dual-robot payload transport: scenarios, training, evaluation.")
    p.add_argument("--version", action="version", version=f"dqct {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenarios", help="generate scenario files")
    g.add_argument("--family", required=True, help="left, forward, right or straight")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=_gen)

    t = sub.add_parser("train", help="train a team policy with PPO")
    t.add_argument("--scenario-dir", required=True, action="append", help="repeatable")
    t.add_argument("--config", help="JSON with optional train/env/reward sections")
    t.add_argument("--mode", default="projected", help="projected (BLCT) or raw (RL baseline)")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--curve", help="training-curve CSV (default: out path with .curve.csv suffix)")
    t.add_argument("--steps", type=int, help="override train.total_steps")
    t.add_argument("--seed", type=int, help="override train.seed")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="evaluate a method on scenario sets")
    e.add_argument("--method", required=True, help="blct, rl, astar or rrtstar")
    e.add_argument("--checkpoint", help="policy checkpoint for blct/rl")
    e.add_argument("--config", help="JSON with optional env/lattice/rrt sections")
    e.add_argument("--scenario-dir", required=True, action="append", help="repeatable")
    e.add_argument("--out", required=True, help="metrics CSV")
    e.add_argument("--markdown", help="markdown table (default: out path with .md suffix)")
    e.add_argument("--episodes", help="per-episode CSV (default: out path with .episodes.csv suffix)")
    e.add_argument("--log-dir", help="write one JSONL trajectory log per episode")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--repeats", type=int)
    e.add_argument("--rrt-iterations", type=int)
    e.add_argument("--timing", choices=("on", "off"), help="off records zero times for byte-stable output")
    e.set_defaults(func=_eval)

    r = sub.add_parser("replay", help="render a trajectory log to SVG")
    r.add_argument("--log", help="trajectory log (default: the bundled sample rollout)")
    r.add_argument("--out", required=True)
    r.add_argument("--frames", type=int, default=20)
    r.set_defaults(func=_replay)

    s = sub.add_parser("selftest", help="run the fast invariant suite")
    s.set_defaults(func=_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        FileNotFoundError,
        ConfigError,
        CheckpointError,
        ScenarioError,
        ReplayError,
        PPOError,
        ValueError,
    ) as exc:
        print(f"dqct {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
