"""
Proximal policy optimisation on top of :mod:`dqct.policy.network`.

The loss minimised per minibatch is

    -mean(min(rho * A, clip(rho, 1 - eps, 1 + eps) * A))
    + c_v * mean((V - R)^2) - c_e * H

where ``H`` is the entropy of the pre-squash Gaussian. Gradients are exact;
:func:`loss_and_grad` is what the finite-difference check exercises.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .network import (
    PolicyParams,
    gaussian_log_prob,
    log_squash_jacobian,
    mlp_backward,
    mlp_forward,
)

ADV_EPS = 1e-8
_HALF_LOG_2PIE = 0.5 * math.log(2.0 * math.pi * math.e)


class PPOError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    clip_epsilon: float = 0.2
    gae_lambda: float = 0.95
    gamma: float = 0.99
    epochs_per_batch: int = 10
    minibatch_size: int = 64
    rollout_horizon: int = 2048  # per environment
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    total_steps: int = 2_000_000
    seed: int = 0
    num_envs: int = 8
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-5
    hidden: int = 64

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0 or not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gae_lambda and gamma must lie in [0, 1]")
        if self.learning_rate <= 0.0 or self.max_grad_norm <= 0.0:
            raise ValueError("learning_rate and max_grad_norm must be positive")
        for name in ("epochs_per_batch", "minibatch_size", "rollout_horizon", "num_envs", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown training option(s): {', '.join(unknown)}")
        return cls(**data)


@dataclass
class RolloutBatch:
    observations: np.ndarray  # (N, obs_dim)
    actions: np.ndarray  # pre-squash, (N, action_dim)
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    bounds: np.ndarray  # (N, action_dim)

    def __len__(self) -> int:
        return len(self.rewards)

    def normalized_advantages(self) -> np.ndarray:
        a = self.advantages
        return (a - a.mean()) / (a.std() + ADV_EPS)


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    last_value: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalised advantage estimates and returns for one trajectory segment.

    ``last_value`` bootstraps the step after the segment; it is ignored
    when the final step is done.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if not (rewards.shape == values.shape == dones.shape) or rewards.ndim != 1:
        raise ValueError(
            f"gae needs aligned 1-d arrays, got rewards {rewards.shape}, values {values.shape}, dones {dones.shape}"
        )
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    next_value = last_value
    for t in range(n - 1, -1, -1):
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std) + _HALF_LOG_2PIE * len(log_std))


def surrogate(ratio: np.ndarray, adv: np.ndarray, eps: float) -> np.ndarray:
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


def loss_and_grad(
    params: PolicyParams,
    obs: np.ndarray,
    actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    bounds: np.ndarray,
    config: TrainConfig,
) -> tuple[float, np.ndarray, dict]:
    """Total loss, its flat gradient (same layout as ``params.flat()``) and stats."""
    b = len(obs)
    eps = config.clip_epsilon
    mean, a_acts = mlp_forward(params.actor, obs)
    log_std = params.log_std
    inv_var = np.exp(-2.0 * log_std)
    logp = gaussian_log_prob(actions, mean, log_std) - log_squash_jacobian(actions, bounds)
    log_ratio = logp - old_log_probs
    ratio = np.exp(log_ratio)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    surr = np.minimum(unclipped, clipped)
    # the clipped branch is flat in the parameters
    live = unclipped <= clipped

    v_out, c_acts = mlp_forward(params.critic, obs)
    values = v_out[:, 0]
    v_err = values - returns
    entropy = gaussian_entropy(log_std)

    policy_loss = -float(np.mean(surr))
    value_loss = float(np.mean(v_err * v_err))
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy

    # d loss / d logp_i
    g_logp = np.where(live, -ratio * advantages / b, 0.0)
    diff = actions - mean
    g_mean = g_logp[:, None] * diff * inv_var
    g_log_std = np.sum(g_logp[:, None] * (diff * diff * inv_var - 1.0), axis=0) - config.entropy_coef
    g_actor = mlp_backward(params.actor, a_acts, g_mean)
    g_value = (2.0 * config.value_coef / b) * v_err
    g_critic = mlp_backward(params.critic, c_acts, g_value[:, None])

    parts = []
    for gw, gb in g_actor:
        parts += [gw.ravel(), gb]
    parts.append(g_log_std)
    for gw, gb in g_critic:
        parts += [gw.ravel(), gb]
    stats = {
        "loss": loss,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "kl": float(np.mean((ratio - 1.0) - log_ratio)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
    }
    return loss, np.concatenate(parts), stats


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> tuple[np.ndarray, float]:
    norm = float(np.sqrt(np.dot(grad, grad)))
    if norm > max_norm:
        grad = grad * (max_norm / (norm + 1e-12))
    return grad, norm


class Adam:
    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-5):
        self.lr = lr
        self.b1 = beta1
        self.b2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1.0 - self.b1) * grad
        self.v = self.b2 * self.v + (1.0 - self.b2) * grad * grad
        m_hat = self.m / (1.0 - self.b1**self.t)
        v_hat = self.v / (1.0 - self.b2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def ppo_update(
    params: PolicyParams,
    batch: RolloutBatch,
    config: TrainConfig,
    rng: np.random.Generator,
    optimizer: Adam | None = None,
) -> tuple[PolicyParams, dict]:
    """Several epochs of clipped-surrogate minibatch steps.

    Returns the new parameters and stats averaged over minibatches; the
    reported ``kl`` is measured on the whole batch after the last epoch.
    """
    n = len(batch)
    if n == 0:
        return params, {}
    for name in ("observations", "actions", "log_probs", "advantages", "returns"):
        if not np.all(np.isfinite(getattr(batch, name))):
            raise PPOError(f"non-finite values in batch.{name}")
    if optimizer is None:
        optimizer = Adam(params.size, config.learning_rate, eps=config.adam_eps)
    adv = batch.normalized_advantages()
    theta = params.flat()
    sums: dict[str, float] = {}
    count = 0
    for epoch in range(config.epochs_per_batch):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            cur = PolicyParams.from_flat(theta, params)
            loss, grad, stats = loss_and_grad(
                cur,
                batch.observations[idx],
                batch.actions[idx],
                batch.log_probs[idx],
                adv[idx],
                batch.returns[idx],
                batch.bounds[idx],
                config,
            )
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise PPOError(
                    f"non-finite loss in epoch {epoch}, minibatch at {start}: "
                    f"loss={loss}, policy={stats['policy_loss']}, value={stats['value_loss']}, "
                    f"log_std={cur.log_std.tolist()}"
                )
            grad, gnorm = clip_grad_norm(grad, config.max_grad_norm)
            theta = optimizer.step(theta, grad)
            # keep the stored log_std inside its clamp so the parameters stay valid
            new = PolicyParams.from_flat(theta, params)
            new.clamp()
            theta = new.flat()
            stats["grad_norm"] = gnorm
            for k, v in stats.items():
                sums[k] = sums.get(k, 0.0) + v
            count += 1
    out = PolicyParams.from_flat(theta, params)
    if not out.is_finite():
        raise PPOError("parameters became non-finite")
    result = {k: v / count for k, v in sums.items()}
    # whole-batch KL of the final parameters against the behaviour policy
    mean = mlp_forward(out.actor, batch.observations)[0]
    logp = gaussian_log_prob(batch.actions, mean, out.log_std) - log_squash_jacobian(batch.actions, batch.bounds)
    lr = logp - batch.log_probs
    result["kl"] = float(np.mean(np.expm1(lr) - lr))
    return out, result
