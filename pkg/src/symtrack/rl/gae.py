"""Generalized advantage estimation with time-limit bootstrapping."""

from __future__ import annotations

import numpy as np


def gae(rewards, values, truncated, bootstrap, gamma: float, lam: float):
    """Advantages and returns over a rollout of length T.

    ``values`` has T + 1 rows (the last is the value after the rollout).
    Where ``truncated[t]`` the successor value is ``bootstrap[t]`` (the value
    of the final state before the auto-reset, or 0 after divergence) and the
    recursion is cut. Extra trailing axes (environments) broadcast.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    trunc = np.asarray(truncated, dtype=bool)
    bootstrap = np.asarray(bootstrap, dtype=float)
    T = rewards.shape[0]
    if values.shape[0] != T + 1:
        raise ValueError("values must have one more row than rewards")
    next_v = np.where(trunc, bootstrap, values[1:])
    delta = rewards + gamma * next_v - values[:-1]
    adv = np.zeros_like(rewards)
    carry = np.zeros(rewards.shape[1:])
    for t in range(T - 1, -1, -1):
        carry = delta[t] + gamma * lam * np.where(trunc[t], 0.0, carry)
        adv[t] = carry
    return adv, adv + values[:-1]


def normalize_advantages(adv, eps: float = 1e-8) -> np.ndarray:
    adv = np.asarray(adv, dtype=float)
    if adv.size < 2:
        return adv - adv.mean()
    centered = adv - adv.mean()
    out = centered / (np.sqrt(np.mean(centered**2)) + eps)
    # second pass removes the residual mean left by rounding
    return out - out.mean()
