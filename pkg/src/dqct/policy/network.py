"""
Actor-critic MLPs with hand-written backpropagation.

The actor outputs the mean of a diagonal Gaussian over a pre-squash action
``u``; the emitted action is ``bound * tanh(u)``. The critic is a separate
MLP with a scalar head. Everything is float64.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
PRE_SQUASH_LIMIT = 15.0  # tanh(15) < 1 in float64
CHECKPOINT_FORMAT = "dqct-policy"
CHECKPOINT_VERSION = 1
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

Layers = list[tuple[np.ndarray, np.ndarray]]


class CheckpointError(ValueError):
    pass


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


def init_mlp(rng: np.random.Generator, sizes: list[int], out_gain: float) -> Layers:
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if i == len(sizes) - 2 else math.sqrt(2.0)
        layers.append((_orthogonal(rng, n_in, n_out, gain), np.zeros(n_out)))
    return layers


def mlp_forward(layers: Layers, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Tanh hidden layers, linear output. Returns the output and every layer input."""
    acts = [x]
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        h = np.tanh(z) if i < last else z
        acts.append(h)
    return h, acts


def mlp_backward(layers: Layers, acts: list[np.ndarray], grad_out: np.ndarray) -> Layers:
    grads = []
    g = grad_out
    last = len(layers) - 1
    for i in range(last, -1, -1):
        w, _ = layers[i]
        if i < last:
            g = g * (1.0 - acts[i + 1] ** 2)
        grads.append((acts[i].T @ g, g.sum(axis=0)))
        if i > 0:
            g = g @ w.T
    grads.reverse()
    return grads


@dataclass
class PolicyParams:
    actor: Layers
    log_std: np.ndarray
    critic: Layers

    @classmethod
    def init(cls, obs_dim: int, action_dim: int, hidden: int = 64, seed: int = 0, depth: int = 2) -> PolicyParams:
        rng = np.random.default_rng(seed)
        actor = init_mlp(rng, [obs_dim, *[hidden] * depth, action_dim], 0.01)
        critic = init_mlp(rng, [obs_dim, *[hidden] * depth, 1], 1.0)
        return cls(actor, np.zeros(action_dim), critic)

    @classmethod
    def zeros_like(cls, other: PolicyParams) -> PolicyParams:
        return cls.from_flat(np.zeros(other.size), other)

    @property
    def obs_dim(self) -> int:
        return self.actor[0][0].shape[0]

    @property
    def action_dim(self) -> int:
        return self.log_std.shape[0]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in self.actor:
            out += [w, b]
        out.append(self.log_std)
        for w, b in self.critic:
            out += [w, b]
        return out

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, vec: np.ndarray, like: PolicyParams) -> PolicyParams:
        pos = 0

        def take(shape):
            nonlocal pos
            n = int(np.prod(shape))
            out = vec[pos : pos + n].reshape(shape).copy()
            pos += n
            return out

        actor = [(take(w.shape), take(b.shape)) for w, b in like.actor]
        log_std = take(like.log_std.shape)
        critic = [(take(w.shape), take(b.shape)) for w, b in like.critic]
        return cls(actor, log_std, critic)

    def copy(self) -> PolicyParams:
        return PolicyParams.from_flat(self.flat(), self)

    def clamp(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def log_squash_jacobian(u: np.ndarray, bound: np.ndarray) -> np.ndarray:
    """``log |d(bound * tanh u)/du|`` summed over action dimensions, computed stably."""
    # log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u))
    log1m_tanh2 = 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    return np.sum(np.log(bound) + log1m_tanh2, axis=-1)


def gaussian_log_prob(u: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (u - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=-1)


def squashed_log_prob(u: np.ndarray, mean: np.ndarray, log_std: np.ndarray, bound: np.ndarray) -> np.ndarray:
    """Log-density of the emitted action ``bound * tanh(u)``."""
    return gaussian_log_prob(u, mean, log_std) - log_squash_jacobian(u, bound)


def actor_mean(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    return mlp_forward(params.actor, obs)[0]


def critic_value(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    return mlp_forward(params.critic, obs)[0][..., 0]


def sample_pre_squash(mean: np.ndarray, log_std: np.ndarray, noise: np.ndarray) -> np.ndarray:
    return np.clip(mean + np.exp(log_std) * noise, -PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT)


def squash(u: np.ndarray, bound: np.ndarray) -> np.ndarray:
    return bound * np.tanh(u)


def act(
    params: PolicyParams,
    obs: np.ndarray,
    bound: np.ndarray,
    stochastic: bool = True,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, float, float, np.ndarray]:
    """One action for one observation.

    Returns ``(action, log_prob, value, pre_squash)``; the deterministic
    action is the squashed mean.
    """
    obs = np.asarray(obs, dtype=float)
    mean = actor_mean(params, obs)
    if stochastic:
        if rng is None:
            raise ValueError("stochastic sampling needs an rng")
        u = sample_pre_squash(mean, params.log_std, rng.standard_normal(mean.shape))
    else:
        u = np.clip(mean, -PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT)
    logp = float(squashed_log_prob(u, mean, params.log_std, bound))
    value = float(critic_value(params, obs))
    return squash(u, bound), logp, value, u


def deterministic_action(params: PolicyParams, obs: np.ndarray, bound: np.ndarray) -> np.ndarray:
    """Mean action only; the evaluation hot path skips the critic."""
    h = obs
    last = len(params.actor) - 1
    for i, (w, b) in enumerate(params.actor):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
    return bound * np.tanh(np.clip(h, -PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT))


# -- checkpoints -----------------------------------------------------------


def _layers_to_json(layers: Layers) -> list[dict]:
    return [
        {"w_shape": list(w.shape), "w": w.ravel().tolist(), "b_shape": list(b.shape), "b": b.tolist()}
        for w, b in layers
    ]


def _layers_from_json(items, name: str) -> Layers:
    out = []
    for i, item in enumerate(items):
        try:
            w = np.asarray(item["w"], dtype=float)
            b = np.asarray(item["b"], dtype=float)
            w_shape, b_shape = tuple(item["w_shape"]), tuple(item["b_shape"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{name}[{i}]: malformed layer ({exc})") from None
        if w.size != int(np.prod(w_shape)) or b.shape != b_shape or len(w_shape) != 2 or b_shape != (w_shape[1],):
            raise CheckpointError(f"{name}[{i}]: data does not match declared shapes {w_shape}/{b_shape}")
        out.append((w.reshape(w_shape), b))
    for i in range(1, len(out)):
        if out[i][0].shape[0] != out[i - 1][0].shape[1]:
            raise CheckpointError(f"{name}[{i}]: input size {out[i][0].shape[0]} != previous output {out[i - 1][0].shape[1]}")
    return out


def save_checkpoint(params: PolicyParams, path: str | Path, meta: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "obs_dim": params.obs_dim,
        "action_dim": params.action_dim,
        "meta": meta or {},
        "actor": _layers_to_json(params.actor),
        "log_std": params.log_std.tolist(),
        "critic": _layers_to_json(params.critic),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path: str | Path, obs_dim: int | None = None, action_dim: int | None = None) -> PolicyParams:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a JSON checkpoint ({exc})") from None
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format/version")
    actor = _layers_from_json(doc.get("actor", []), "actor")
    critic = _layers_from_json(doc.get("critic", []), "critic")
    log_std = np.asarray(doc.get("log_std", []), dtype=float)
    if not actor or not critic:
        raise CheckpointError(f"{path}: missing actor or critic layers")
    if actor[0][0].shape[0] != doc["obs_dim"] or critic[0][0].shape[0] != doc["obs_dim"]:
        raise CheckpointError(f"{path}: input layers do not match obs_dim {doc['obs_dim']}")
    if actor[-1][0].shape[1] != doc["action_dim"] or log_std.shape != (doc["action_dim"],):
        raise CheckpointError(f"{path}: actor head does not match action_dim {doc['action_dim']}")
    if critic[-1][0].shape[1] != 1:
        raise CheckpointError(f"{path}: critic head must have one output")
    if obs_dim is not None and doc["obs_dim"] != obs_dim:
        raise CheckpointError(f"{path}: obs_dim {doc['obs_dim']} != expected {obs_dim}")
    if action_dim is not None and doc["action_dim"] != action_dim:
        raise CheckpointError(f"{path}: action_dim {doc['action_dim']} != expected {action_dim}")
    return PolicyParams(actor, log_std, critic)
