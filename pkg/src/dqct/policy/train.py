"""
Rollout collection and the PPO training loop.

Each environment slot owns its own RNG (``default_rng([seed, k])``) and walks
the scenario list round-robin (slot ``k`` takes scenarios ``k, k + n, ...``).
Slots never share state during a rollout, so collecting them on a thread pool
gives bit-identical results to the sequential loop.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..env import ACTION_DIM, OBS_DIM, EnvConfig, Mode, RewardWeights, TransportEnv, action_bounds
from ..lowlevel import TeamAction
from ..scenario import Scenario
from .network import (
    PolicyParams,
    actor_mean,
    critic_value,
    sample_pre_squash,
    save_checkpoint,
    squash,
    squashed_log_prob,
)
from .ppo import Adam, RolloutBatch, TrainConfig, gae, ppo_update

CURVE_COLUMNS = (
    "iteration",
    "env_steps",
    "episodes",
    "mean_return",
    "success_rate",
    "kl",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_fraction",
)
KL_FLAG = 0.2


def thread_count() -> int:
    """Worker threads for rollout collection, from ``DQCT_THREADS`` (default 1)."""
    raw = os.environ.get("DQCT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"DQCT_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


@dataclass
class _Segment:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    bounds: np.ndarray
    last_value: float
    episode_returns: list[float] = field(default_factory=list)
    episode_success: list[bool] = field(default_factory=list)


class _Slot:
    """One environment with its RNG, scenario cursor and in-progress episode."""

    def __init__(self, k: int, n_slots: int, scenarios: Sequence[Scenario], mode: Mode, weights, env_config, seed: int):
        self.k = k
        self.stride = n_slots
        self.scenarios = scenarios
        self.rng = np.random.default_rng([seed, k])
        self.cursor = k
        self.env = TransportEnv(scenarios[k % len(scenarios)], mode, weights, env_config)
        self.obs = None
        self.ep_return = 0.0
        self._reset()

    def _reset(self) -> None:
        scenario = self.scenarios[self.cursor % len(self.scenarios)]
        self.cursor += self.stride
        _, obs = self.env.reset(scenario)
        self.obs = obs.vector
        self.bound = action_bounds(scenario)
        self.ep_return = 0.0

    def collect(self, params: PolicyParams, horizon: int, gamma: float) -> _Segment:
        obs = np.empty((horizon, OBS_DIM))
        acts = np.empty((horizon, ACTION_DIM))
        bounds = np.empty((horizon, ACTION_DIM))
        logp = np.empty(horizon)
        rew = np.empty(horizon)
        val = np.empty(horizon)
        done = np.zeros(horizon, dtype=bool)
        seg_returns: list[float] = []
        seg_success: list[bool] = []
        for t in range(horizon):
            o = self.obs
            mean = actor_mean(params, o)
            u = sample_pre_squash(mean, params.log_std, self.rng.standard_normal(ACTION_DIM))
            obs[t] = o
            acts[t] = u
            bounds[t] = self.bound
            logp[t] = squashed_log_prob(u, mean, params.log_std, self.bound)
            val[t] = critic_value(params, o)
            res = self.env.step(TeamAction.from_array(squash(u, self.bound)))
            r = res.reward
            self.ep_return += r
            if res.truncated:
                # time limit is not a true terminal: fold the bootstrap into the reward
                r += gamma * float(critic_value(params, res.observation.vector))
            rew[t] = r
            if res.terminated or res.truncated:
                done[t] = True
                seg_returns.append(self.ep_return)
                seg_success.append(bool(res.info["success"]))
                self._reset()
            else:
                self.obs = res.observation.vector
        last_value = 0.0 if done[-1] else float(critic_value(params, self.obs))
        return _Segment(obs, acts, logp, rew, val, done, bounds, last_value, seg_returns, seg_success)


def _split(remaining: int, n: int, horizon: int) -> list[int]:
    base, extra = divmod(remaining, n)
    return [min(horizon, base + (1 if k < extra else 0)) for k in range(n)]


def _fmt(x: float) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.10g}"


def write_curve(rows: list[dict], path: str | Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in CURVE_COLUMNS])
    Path(path).write_text(buf.getvalue())


def train(
    scenarios: Sequence[Scenario],
    config: TrainConfig = TrainConfig(),
    mode: Mode = Mode.PROJECTED,
    weights: RewardWeights | None = None,
    env_config: EnvConfig = EnvConfig(),
    curve_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    initial: PolicyParams | None = None,
    threads: int | None = None,
    progress: Callable[[dict], None] | None = None,
) -> tuple[PolicyParams, list[dict]]:
    """Train a team policy; returns the final parameters and one curve row per iteration.

    The discount used for advantages is ``config.gamma``; ``weights`` only
    supplies the reward coefficients.
    """
    if not scenarios:
        raise ValueError("train needs at least one scenario")
    if weights is None:
        weights = RewardWeights(gamma=config.gamma)
    params = initial.copy() if initial is not None else PolicyParams.init(OBS_DIM, ACTION_DIM, config.hidden, config.seed)
    curve: list[dict] = []
    meta = {"mode": mode.value, "train_config": config.to_dict()}
    if config.total_steps == 0:
        if curve_path is not None:
            write_curve(curve, curve_path)
        if checkpoint_path is not None:
            save_checkpoint(params, checkpoint_path, {**meta, "env_steps": 0})
        return params, curve

    n = config.num_envs
    slots = [_Slot(k, n, scenarios, mode, weights, env_config, config.seed) for k in range(n)]
    update_rng = np.random.default_rng([config.seed, n, 0x5EED])
    optimizer = Adam(params.size, config.learning_rate, eps=config.adam_eps)
    threads = thread_count() if threads is None else threads
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    steps = 0
    iteration = 0
    try:
        while steps < config.total_steps:
            horizons = _split(config.total_steps - steps, n, config.rollout_horizon)
            snapshot = params.copy()
            jobs = [(slot, h) for slot, h in zip(slots, horizons) if h > 0]
            if pool is None:
                segs = [slot.collect(snapshot, h, config.gamma) for slot, h in jobs]
            else:
                segs = list(pool.map(lambda job: job[0].collect(snapshot, job[1], config.gamma), jobs))
            advs, rets = [], []
            for s in segs:
                a, r = gae(s.rewards, s.values, s.dones, config.gamma, config.gae_lambda, s.last_value)
                advs.append(a)
                rets.append(r)
            batch = RolloutBatch(
                observations=np.concatenate([s.obs for s in segs]),
                actions=np.concatenate([s.actions for s in segs]),
                log_probs=np.concatenate([s.log_probs for s in segs]),
                rewards=np.concatenate([s.rewards for s in segs]),
                values=np.concatenate([s.values for s in segs]),
                dones=np.concatenate([s.dones for s in segs]),
                advantages=np.concatenate(advs),
                returns=np.concatenate(rets),
                bounds=np.concatenate([s.bounds for s in segs]),
            )
            params, stats = ppo_update(params, batch, config, update_rng, optimizer)
            steps += len(batch)
            iteration += 1
            ep_ret = [r for s in segs for r in s.episode_returns]
            ep_ok = [ok for s in segs for ok in s.episode_success]
            row = {
                "iteration": iteration,
                "env_steps": steps,
                "episodes": len(ep_ret),
                "mean_return": float(np.mean(ep_ret)) if ep_ret else math.nan,
                "success_rate": float(np.mean(ep_ok)) if ep_ok else math.nan,
                "kl": stats["kl"],
                "policy_loss": stats["policy_loss"],
                "value_loss": stats["value_loss"],
                "entropy": stats["entropy"],
                "clip_fraction": stats["clip_fraction"],
            }
            curve.append(row)
            if progress is not None:
                progress(row)
            if curve_path is not None:
                write_curve(curve, curve_path)
            if checkpoint_path is not None:
                save_checkpoint(params, checkpoint_path, {**meta, "env_steps": steps})
    finally:
        if pool is not None:
            pool.shutdown()
    return params, curve
