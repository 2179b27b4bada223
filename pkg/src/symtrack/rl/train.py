"""Synchronous PPO training on batched tracking environments."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..symmetry import ReductionKind, check_compatible, lift_action, obs_dim, reduce
from ..tracking_mdp import EnvConfig, TrackingEnv, TrackingSystem, index_state
from .agent import ActionTransform, Agent, default_action_transform
from .distributions import policy_sample
from .gae import gae, normalize_advantages
from .normalize import ObsNormalizer, RewardScaler
from .optim import adam_init
from .ppo import (
    PpoConfig,
    TrajectoryBatch,
    all_finite,
    init_actor_critic,
    policy_mean,
    ppo_update,
    value,
)

log = logging.getLogger(__name__)

LOG_FIELDS = ["iteration", "global_step", "mean_reward", "episode_return", "episodes",
              "policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction",
              "diverged_envs", "aborted"]


@dataclass
class TrainResult:
    agent: Agent
    log: list = field(default_factory=list)
    stopped_early: bool = False
    message: str = ""

    @property
    def params(self) -> dict:
        return self.agent.params


def _seed_streams(seed):
    ss = np.random.SeedSequence(seed)
    env_ss, policy_ss, init_ss = ss.spawn(3)
    make = lambda s: np.random.Generator(np.random.Philox(s))  # noqa: E731
    return env_ss, make(policy_ss), make(init_ss)


def train(system: TrackingSystem, env_cfg: EnvConfig, kind: ReductionKind, cfg: PpoConfig,
          seed: int = 0, threads: int | None = None, transform: ActionTransform | None = None,
          callback=None) -> TrainResult:
    """Train a reduced policy; the policy only ever sees ``reduce(s, kind)``.

    ``callback(iteration, global_step, agent)`` runs after every update and
    may return a dict merged into that iteration's log row.
    """
    check_compatible(system.name, kind)
    transform = transform or default_action_transform(system)
    env_ss, rng, init_rng = _seed_streams(seed)
    env = TrackingEnv(system, env_cfg, cfg.num_envs, env_ss, threads)
    n_obs, n_act = obs_dim(kind, system), system.action_dim
    params = init_actor_critic(n_obs, n_act, init_rng, cfg.hidden, cfg.init_log_std)
    adam = adam_init(params)
    normalizer = ObsNormalizer(n_obs) if cfg.normalize_obs else None
    scaler = RewardScaler(cfg.num_envs, env_cfg.gamma) if cfg.normalize_reward else None
    agent = Agent(params, kind, normalizer, transform)
    result = TrainResult(agent)

    N, T = cfg.num_envs, cfg.rollout_length
    iterations = max(1, math.ceil(cfg.total_steps / cfg.batch_size))
    state = env.reset(stagger=cfg.stagger_resets)
    ep_return = np.zeros(N)
    global_step = 0

    def observe(s, update):
        raw, ctx = reduce(s, kind)
        if normalizer is None:
            return raw, ctx
        if update:
            normalizer.update(raw)
        return normalizer(raw), ctx

    for it in range(1, iterations + 1):
        obs_buf = np.zeros((T, N, n_obs))
        act_buf = np.zeros((T, N, n_act))
        logp_buf = np.zeros((T, N))
        val_buf = np.zeros((T + 1, N))
        rew_buf = np.zeros((T, N))
        raw_rew = np.zeros((T, N))
        trunc_buf = np.zeros((T, N), dtype=bool)
        boot_buf = np.zeros((T, N))
        finished, n_diverged = [], 0

        for t in range(T):
            obs, ctx = observe(state, update=True)
            mean = policy_mean(params, obs)
            a, logp = policy_sample(mean, params["log_std"], rng)
            obs_buf[t], act_buf[t], logp_buf[t] = obs, a, logp
            val_buf[t] = value(params, obs)
            u = lift_action(transform(a), ctx)
            state, rew, trunc, div, final = env.step(u)
            raw_rew[t] = rew
            trunc_buf[t] = trunc
            ok = np.flatnonzero(trunc & ~div)
            if ok.size:
                boot_buf[t, ok] = value(params, observe(index_state(final, ok), update=False)[0])
            n_diverged += int(div.sum())
            ep_return += rew
            for i in np.flatnonzero(trunc):
                finished.append(ep_return[i])
                ep_return[i] = 0.0
            rew_buf[t] = scaler(rew, trunc) if scaler is not None else rew
        val_buf[T] = value(params, observe(state, update=False)[0])
        global_step += N * T

        adv, ret = gae(rew_buf, val_buf, trunc_buf, boot_buf, env_cfg.gamma, cfg.gae_lambda)
        batch = TrajectoryBatch(
            obs_buf.reshape(N * T, n_obs), act_buf.reshape(N * T, n_act),
            logp_buf.reshape(-1), val_buf[:T].reshape(-1),
            normalize_advantages(adv.reshape(-1)), ret.reshape(-1))
        params, adam, stats = ppo_update(params, batch, cfg, adam, rng)
        agent.params = params

        row = {
            "iteration": it,
            "global_step": global_step,
            "mean_reward": float(raw_rew.mean()),
            "episode_return": float(np.mean(finished)) if finished else float("nan"),
            "episodes": len(finished),
            "policy_loss": stats.get("policy_loss", float("nan")),
            "value_loss": stats.get("value_loss", float("nan")),
            "entropy": stats.get("entropy", float("nan")),
            "approx_kl": stats.get("approx_kl", float("nan")),
            "clip_fraction": stats.get("clip_fraction", float("nan")),
            "diverged_envs": n_diverged,
            "aborted": int(stats["aborted"]),
        }
        if callback is not None:
            row.update(callback(it, global_step, agent) or {})
        result.log.append(row)
        if stats["aborted"] or not all_finite(params):
            result.stopped_early = True
            result.message = f"training stopped at iteration {it}: {stats.get('reason', 'non-finite parameters')}"
            log.error(result.message)
            break
    return result


def auc(log_rows, key: str = "mean_reward") -> float:
    """Area under the training curve, normalized by the step span."""
    steps = np.array([r["global_step"] for r in log_rows], dtype=float)
    vals = np.array([r[key] for r in log_rows], dtype=float)
    if len(steps) == 1:
        return float(vals[0])
    return float(np.trapezoid(vals, steps) / (steps[-1] - steps[0]))


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_log_csv(rows, path) -> None:
    keys = list(LOG_FIELDS)
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([format_value(r.get(k, "")) for k in keys])
