"""Deployable policy: reduce, normalize, act, un-scale, lift."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..symmetry import ReductionKind, lift_action, reduce
from ..tracking_mdp import TrackingState, TrackingSystem
from .normalize import ObsNormalizer
from .ppo import policy_mean


@dataclass(frozen=True)
class ActionTransform:
    """Physical (reduced) action = ``offset + scale * policy output``."""

    offset: np.ndarray
    scale: np.ndarray

    def __call__(self, a) -> np.ndarray:
        return self.offset + self.scale * np.asarray(a)

    def inverse(self, u) -> np.ndarray:
        return (np.asarray(u) - self.offset) / self.scale


def default_action_transform(system: TrackingSystem) -> ActionTransform:
    """Per-system scaling so a unit Gaussian output is a sensible action.

    Rotor thrusts are centred on hover; everything else on zero.
    """
    if system.name == "particle":
        return ActionTransform(np.zeros(3), np.full(3, 3.0))
    if system.name == "astrobee":
        return ActionTransform(np.zeros(6), np.array([0.2, 0.2, 0.2, 5.0, 5.0, 5.0]))
    if system.name == "quadrotor":
        return ActionTransform(np.full(4, system.params.hover_thrust), np.full(4, 0.1))
    raise ValueError(f"no action transform for system {system.name!r}")


class Agent:
    """Trained policy with frozen observation statistics."""

    def __init__(self, params: dict, kind: ReductionKind, normalizer: ObsNormalizer | None,
                 transform: ActionTransform):
        self.params = params
        self.kind = kind
        self.normalizer = normalizer
        self.transform = transform

    def observe(self, s: TrackingState):
        obs, ctx = reduce(s, self.kind)
        if self.normalizer is not None:
            obs = self.normalizer(obs)
        return obs, ctx

    def act(self, s: TrackingState) -> np.ndarray:
        """Deterministic physical action (policy mean, lifted)."""
        obs, ctx = self.observe(s)
        return lift_action(self.transform(policy_mean(self.params, obs)), ctx)
