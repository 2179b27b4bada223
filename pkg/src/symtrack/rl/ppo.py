"""Clipped-surrogate PPO on a Gaussian actor and a separate critic."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .distributions import log_prob_grads, policy_entropy, policy_log_prob
from .mlp import init_mlp, layer_sizes, mlp_backward, mlp_forward
from .optim import AdamState, adam_step, clip_by_global_norm


@dataclass(frozen=True)
class PpoConfig:
    lr: float = 3e-4
    clip_eps: float = 0.2
    epochs: int = 10
    minibatches: int = 32
    gae_lambda: float = 0.95
    ent_coef: float = 0.0
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    num_envs: int = 64
    rollout_length: int = 128
    total_steps: int = 500_000
    hidden: int = 64
    init_log_std: float = 0.0
    normalize_obs: bool = True
    normalize_reward: bool = True
    stagger_resets: bool = True

    def __post_init__(self):
        if not self.clip_eps > 0:
            raise ValueError(f"clip_eps must be > 0, got {self.clip_eps}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        for name in ("epochs", "minibatches", "num_envs", "rollout_length", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.max_grad_norm < 0:
            raise ValueError("max_grad_norm must be >= 0")

    @property
    def batch_size(self) -> int:
        return self.num_envs * self.rollout_length

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# ---------------------------------------------------------------- parameters

def init_actor_critic(obs_dim: int, act_dim: int, rng: np.random.Generator,
                      hidden: int = 64, init_log_std: float = 0.0) -> dict:
    """Flat parameter dict with ``pi/``, ``vf/`` and ``log_std`` entries."""
    pi = init_mlp([obs_dim, hidden, hidden, act_dim], rng, out_gain=0.01)
    vf = init_mlp([obs_dim, hidden, hidden, 1], rng, out_gain=1.0)
    params = {f"pi/{k}": v for k, v in pi.items()}
    params.update({f"vf/{k}": v for k, v in vf.items()})
    params["log_std"] = np.full(act_dim, float(init_log_std))
    return params


def sub(params: dict, prefix: str) -> dict:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix + "/")}


def architecture(params: dict) -> dict:
    return {"pi": layer_sizes(sub(params, "pi")), "vf": layer_sizes(sub(params, "vf"))}


def policy_keys(params: dict) -> list[str]:
    return [k for k in params if k.startswith("pi/")] + ["log_std"]


def value_keys(params: dict) -> list[str]:
    return [k for k in params if k.startswith("vf/")]


def policy_mean(params: dict, obs) -> np.ndarray:
    return mlp_forward(sub(params, "pi"), obs)[0]


def value(params: dict, obs) -> np.ndarray:
    return mlp_forward(sub(params, "vf"), obs)[0][..., 0]


def all_finite(params: dict) -> bool:
    return all(np.all(np.isfinite(v)) for v in params.values())


# ---------------------------------------------------------------- batches

@dataclass
class TrajectoryBatch:
    """Flattened rollout data for one update (normalized observations)."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        n = self.obs.shape[0]
        for f in fields(self):
            if getattr(self, f.name).shape[0] != n:
                raise ValueError(f"batch field {f.name} has misaligned length")
        if not np.all(np.isfinite(self.advantages)):
            raise ValueError("advantages must be finite")

    def __len__(self) -> int:
        return self.obs.shape[0]

    def take(self, idx) -> "TrajectoryBatch":
        return TrajectoryBatch(*[getattr(self, f.name)[idx] for f in fields(self)])


# ---------------------------------------------------------------- loss

def ppo_loss_and_grads(params: dict, mb: TrajectoryBatch, cfg: PpoConfig):
    """Loss terms and exact gradients for one minibatch."""
    B = len(mb)
    pi, vf = sub(params, "pi"), sub(params, "vf")
    log_std = params["log_std"]
    mean, pi_cache = mlp_forward(pi, mb.obs)
    v_out, vf_cache = mlp_forward(vf, mb.obs)
    v = v_out[:, 0]

    logp = policy_log_prob(mean, log_std, mb.actions)
    ratio = np.exp(logp - mb.log_probs)
    adv = mb.advantages
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surr1, surr2 = ratio * adv, clipped * adv
    pg_loss = -np.mean(np.minimum(surr1, surr2))
    v_err = v - mb.returns
    v_loss = np.mean(v_err**2)
    entropy = policy_entropy(log_std)
    loss = pg_loss + cfg.vf_coef * v_loss - cfg.ent_coef * entropy

    # the min passes gradient through the unclipped ratio unless the clipped
    # branch is strictly smaller, where the clip is flat
    active = surr1 <= surr2
    d_logp = -(adv * ratio * active) / B
    d_mean_unit, d_logstd_unit = log_prob_grads(mean, log_std, mb.actions)
    grads = {f"pi/{k}": g for k, g in
             mlp_backward(pi, pi_cache, d_logp[:, None] * d_mean_unit).items()}
    grads["log_std"] = (d_logp[:, None] * d_logstd_unit).sum(axis=0) - cfg.ent_coef
    d_v = (2.0 * cfg.vf_coef / B) * v_err
    grads.update({f"vf/{k}": g for k, g in mlp_backward(vf, vf_cache, d_v[:, None]).items()})

    stats = {
        "loss": float(loss),
        "policy_loss": float(pg_loss),
        "value_loss": float(v_loss),
        "entropy": float(entropy),
        "approx_kl": float(np.mean((ratio - 1.0) - np.log(ratio))),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
    }
    return loss, grads, stats


def ppo_update(params: dict, batch: TrajectoryBatch, cfg: PpoConfig, adam: AdamState,
               rng: np.random.Generator):
    """Epochs of shuffled minibatch Adam steps.

    Advantages are expected to be normalized already. Gradients of the
    actor (incl. log-std) and critic are norm-clipped separately. A
    non-finite loss or parameter aborts the whole update: the input params
    and optimizer state are returned with ``stats["aborted"] = True``.
    """
    n = len(batch)
    n_mb = min(cfg.minibatches, n)
    new, state = params, adam
    pk, vk = policy_keys(params), value_keys(params)
    acc = {}
    count = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for idx in np.array_split(perm, n_mb):
            loss, grads, st = ppo_loss_and_grads(new, batch.take(idx), cfg)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                return params, adam, {"aborted": True, "reason": "non-finite loss"}
            grads, gn_pi = clip_by_global_norm(grads, cfg.max_grad_norm, pk)
            grads, gn_vf = clip_by_global_norm(grads, cfg.max_grad_norm, vk)
            new, state = adam_step(new, grads, state, cfg.lr)
            st["grad_norm_pi"], st["grad_norm_vf"] = gn_pi, gn_vf
            for k, v in st.items():
                acc[k] = acc.get(k, 0.0) + v
            count += 1
    if not all_finite(new):
        return params, adam, {"aborted": True, "reason": "non-finite parameters"}
    stats = {k: v / max(count, 1) for k, v in acc.items()}
    stats["aborted"] = False
    return new, state, stats
