"""JSON config files for training and evaluation; every field is optional."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any

from .baselines import LatticeConfig, RRTConfig
from .env import EnvConfig, RewardWeights
from .harness import EvalConfig
from .policy.ppo import TrainConfig


class ConfigError(ValueError):
    pass


def _build(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown option(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _read(path: str | Path | None) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def load_train_config(path: str | Path | None) -> tuple[TrainConfig, EnvConfig, RewardWeights | None]:
    """Sections ``train``, ``env`` and ``reward``.

    ``reward.r_dist_literal`` is accepted as an alias for ``env.r_dist_literal``.
    """
    data = _read(path)
    unknown = sorted(set(data) - {"train", "env", "reward"})
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {', '.join(unknown)}")
    train = _build(TrainConfig, data.get("train"), "train")
    env_data = dict(data.get("env") or {})
    reward_data = data.get("reward")
    if isinstance(reward_data, dict) and "r_dist_literal" in reward_data:
        # the distance-term variant lives on the env but reads naturally as a reward option
        reward_data = dict(reward_data)
        env_data["r_dist_literal"] = reward_data.pop("r_dist_literal")
    env = _build(EnvConfig, env_data, "env")
    reward = _build(RewardWeights, reward_data, "reward") if reward_data is not None else None
    return train, env, reward


def load_eval_config(path: str | Path | None) -> EvalConfig:
    """Sections ``env``, ``lattice`` and ``rrt`` plus scalar keys of :class:`EvalConfig`."""
    data = _read(path)
    sections = {"env": EnvConfig, "lattice": LatticeConfig, "rrt": RRTConfig}
    scalars = {f.name for f in dataclasses.fields(EvalConfig)} - set(sections)
    unknown = sorted(set(data) - set(sections) - scalars)
    if unknown:
        raise ConfigError(f"{path}: unknown option(s) {', '.join(unknown)}")
    if isinstance(data.get("lattice"), dict) and "motion_primitives" in data["lattice"]:
        raise ConfigError("lattice.motion_primitives cannot be set from a config file")
    kw = {name: _build(cls, data.get(name), name) for name, cls in sections.items()}
    kw.update({k: data[k] for k in scalars if k in data})
    return _build(EvalConfig, kw, "eval")
