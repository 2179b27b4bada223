"""Diagonal Gaussian policy head with a state-independent log-std."""

from __future__ import annotations

import numpy as np

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def policy_log_prob(mean, log_std, action) -> np.ndarray:
    z = (np.asarray(action) - mean) * np.exp(-np.asarray(log_std))
    return np.sum(-0.5 * z * z - log_std - HALF_LOG_2PI, axis=-1)


def policy_sample(mean, log_std, rng: np.random.Generator):
    mean = np.asarray(mean, dtype=float)
    eps = rng.standard_normal(mean.shape)
    action = mean + np.exp(log_std) * eps
    return action, policy_log_prob(mean, log_std, action)


def policy_entropy(log_std) -> float:
    log_std = np.asarray(log_std, dtype=float)
    return float(np.sum(log_std + 0.5 + HALF_LOG_2PI))


def log_prob_grads(mean, log_std, action):
    """``d log_prob / d mean`` (per sample) and ``d log_prob / d log_std``."""
    inv_var = np.exp(-2.0 * np.asarray(log_std))
    diff = np.asarray(action) - mean
    return diff * inv_var, diff * diff * inv_var - 1.0
