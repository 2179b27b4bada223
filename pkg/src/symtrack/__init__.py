"""Symmetry-reduced tracking control for free-flying robots."""

from .config import ConfigError, RunConfig, load_config
from .symmetry import ReductionKind, reduce, lift_action, verify_symmetry
from .tracking_mdp import (
    AstrobeeSystem,
    CostParams,
    EnvConfig,
    InitSpec,
    ParticleSystem,
    QuadrotorSystem,
    RefActionDist,
    TrackingEnv,
    TrackingState,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "RunConfig", "load_config",
    "ReductionKind", "reduce", "lift_action", "verify_symmetry",
    "AstrobeeSystem", "CostParams", "EnvConfig", "InitSpec", "ParticleSystem", "QuadrotorSystem",
    "RefActionDist", "TrackingEnv", "TrackingState",
]
