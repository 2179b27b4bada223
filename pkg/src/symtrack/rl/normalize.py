"""Running statistics for observation and reward normalization."""

from __future__ import annotations

import numpy as np


class RunningMeanStd:
    """Batched running mean/variance (parallel-variance merge)."""

    def __init__(self, shape=(), eps: float = 1e-4):
        self.mean = np.zeros(shape)
        self.var = np.ones(shape)
        self.count = eps

    def update(self, x) -> None:
        x = np.asarray(x, dtype=float).reshape((-1,) + self.mean.shape)
        b_mean = x.mean(axis=0)
        b_var = x.var(axis=0)
        n = x.shape[0]
        delta = b_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * n / total
        m2 = self.var * self.count + b_var * n + delta**2 * self.count * n / total
        self.var = m2 / total
        self.count = total

    def state(self) -> dict:
        return {"mean": self.mean.copy(), "var": self.var.copy(), "count": float(self.count)}

    @classmethod
    def from_state(cls, d: dict) -> "RunningMeanStd":
        out = cls(np.shape(d["mean"]))
        out.mean = np.array(d["mean"], dtype=float)
        out.var = np.array(d["var"], dtype=float)
        out.count = float(d["count"])
        return out


class ObsNormalizer:
    def __init__(self, dim: int, clip: float = 10.0, eps: float = 1e-8):
        self.rms = RunningMeanStd((dim,))
        self.clip = clip
        self.eps = eps

    def update(self, obs) -> None:
        self.rms.update(obs)

    def __call__(self, obs) -> np.ndarray:
        z = (np.asarray(obs) - self.rms.mean) / np.sqrt(self.rms.var + self.eps)
        return np.clip(z, -self.clip, self.clip)


class RewardScaler:
    """Divides rewards by the running std of the discounted return."""

    def __init__(self, num_envs: int, gamma: float, clip: float = 10.0, eps: float = 1e-8):
        self.rms = RunningMeanStd(())
        self.ret = np.zeros(num_envs)
        self.gamma = gamma
        self.clip = clip
        self.eps = eps

    def __call__(self, rewards, done) -> np.ndarray:
        self.ret = self.ret * self.gamma + rewards
        self.rms.update(self.ret)
        out = np.clip(rewards / np.sqrt(self.rms.var + self.eps), -self.clip, self.clip)
        self.ret = np.where(done, 0.0, self.ret)
        return out
