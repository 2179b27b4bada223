"""Tracking-control MDP: state ``(x, x_ref, u_ref)``, reward from running costs,
reference actions resampled from a Gaussian every step.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dynamics import (
    ParticleParams,
    ParticleState,
    QuadrotorParams,
    RigidParams,
    RigidState,
    particle_step,
    quad_step,
    rigid_step,
)
from .geometry import exp_so3, rot_distance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostParams:
    c_r: float = 1.0
    a_r: float = 5.0
    c_v: float = 0.5
    c_R: float = 0.5
    c_xi: float = 0.25
    c_u: float = 0.1

    def __post_init__(self):
        for name in ("c_r", "a_r", "c_v", "c_R", "c_xi", "c_u"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"cost coefficient {name} must be >= 0, got {getattr(self, name)}")


class RefActionDist:
    """Gaussian reference-action distribution with a fixed Cholesky factor."""

    def __init__(self, mean, cov):
        self.mean = np.array(mean, dtype=float)
        cov = np.array(cov, dtype=float)
        if cov.ndim == 1:
            cov = np.diag(cov)
        n = self.mean.shape[0]
        if cov.shape != (n, n):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {n}")
        if not np.allclose(cov, cov.T):
            raise ValueError("reference-action covariance must be symmetric")
        try:
            self.chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("reference-action covariance must be positive definite") from None
        self.cov = cov

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def transform(self, z) -> np.ndarray:
        """mean + L z, summed in a fixed order so batch size never changes the bits."""
        z = np.asarray(z, dtype=float)
        return self.mean + (self.chol * z[..., None, :]).sum(axis=-1)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
        return self.transform(rng.standard_normal(shape + (self.dim,)))


@dataclass(frozen=True)
class InitSpec:
    """Uniform offsets of the actual state from the nominal reference at reset."""

    pos_range: float = 1.0
    vel_range: float = 0.5
    rot_angle: float = 0.5
    omega_range: float = 0.0
    ref_vel_range: float = 0.0  # reference body velocity; 0 keeps it at rest

    def __post_init__(self):
        for name in ("pos_range", "vel_range", "rot_angle", "omega_range", "ref_vel_range"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"init range {name} must be >= 0")


@dataclass(frozen=True)
class EnvConfig:
    ref_dist: RefActionDist
    cost: CostParams = field(default_factory=CostParams)
    init: InitSpec = field(default_factory=InitSpec)
    gamma: float = 0.99
    episode_length: int = 500

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"discount gamma must lie in [0, 1), got {self.gamma}")
        if self.episode_length < 1:
            raise ValueError(f"episode_length must be >= 1, got {self.episode_length}")


class TrackingState(NamedTuple):
    actual: ParticleState | RigidState
    reference: ParticleState | RigidState
    ref_action: np.ndarray


def alpha(y, c_r: float, a_r: float) -> np.ndarray:
    n = np.linalg.norm(np.asarray(y, dtype=float), axis=-1)
    return c_r * n + np.tanh(a_r * n) - 1.0


def effort_cost(u, u_ref, c_u: float) -> np.ndarray:
    return c_u * np.linalg.norm(np.asarray(u, dtype=float) - u_ref, axis=-1)


def particle_tracking_cost(x: ParticleState, x_ref: ParticleState, cost: CostParams):
    return (alpha(x.r - x_ref.r, cost.c_r, cost.a_r)
            + cost.c_v * np.linalg.norm(x.v - x_ref.v, axis=-1))


def rigid_tracking_cost(x: RigidState, x_ref: RigidState, cost: CostParams):
    return (alpha(x.r - x_ref.r, cost.c_r, cost.a_r)
            + cost.c_R * rot_distance(x.R, x_ref.R)
            + cost.c_xi * np.linalg.norm(x.twist - x_ref.twist, axis=-1))


class TrackingSystem:
    """Physical system plugged into the tracking MDP.

    Subclasses provide ``step``, ``tracking_cost`` and the reset geometry.
    """

    name: str
    state_cls: type
    state_dim: int
    action_dim: int

    def step(self, x, u):
        raise NotImplementedError

    def tracking_cost(self, x, x_ref, cost: CostParams):
        raise NotImplementedError

    def nominal_state(self, batch: tuple[int, ...] = ()):
        raise NotImplementedError

    def offset_state(self, x_nom, offset: np.ndarray):
        """Apply a flat reset offset (pos 3, vel 3, rotvec 3, omega 3) to ``x_nom``."""
        raise NotImplementedError

    @property
    def dt(self) -> float:
        return self.params.dt


class ParticleSystem(TrackingSystem):
    name = "particle"
    state_cls = ParticleState
    state_dim = 6
    action_dim = 3

    def __init__(self, params: ParticleParams):
        self.params = params

    def step(self, x, u):
        return particle_step(x, u, self.params)

    def tracking_cost(self, x, x_ref, cost):
        return particle_tracking_cost(x, x_ref, cost)

    def nominal_state(self, batch=()):
        return ParticleState(np.zeros(batch + (3,)), np.zeros(batch + (3,)))

    def offset_state(self, x_nom, offset):
        return ParticleState(x_nom.r + offset[..., 0:3], x_nom.v + offset[..., 3:6])


class AstrobeeSystem(TrackingSystem):
    name = "astrobee"
    state_cls = RigidState
    state_dim = 18
    action_dim = 6

    def __init__(self, params: RigidParams):
        self.params = params

    def step(self, x, u):
        return rigid_step(x, u, self.params)

    def tracking_cost(self, x, x_ref, cost):
        return rigid_tracking_cost(x, x_ref, cost)

    def nominal_state(self, batch=()):
        R = np.broadcast_to(np.eye(3), batch + (3, 3)).copy()
        z = np.zeros(batch + (3,))
        return RigidState(R, z, z.copy(), z.copy())

    def offset_state(self, x_nom, offset):
        # offset pose is right-multiplied so the relative pose q^-1 q_ref
        # does not depend on where the nominal sits
        dR = exp_so3(offset[..., 6:9])
        R = np.asarray(x_nom.R) @ dR
        r = x_nom.r + np.einsum("...ij,...j->...i", x_nom.R, offset[..., 0:3])
        return RigidState(R, r, x_nom.w + offset[..., 9:12], x_nom.v + offset[..., 3:6])


class QuadrotorSystem(AstrobeeSystem):
    name = "quadrotor"
    action_dim = 4

    def __init__(self, params: QuadrotorParams):
        self.params = params

    def step(self, x, u):
        return quad_step(x, u, self.params)


def sample_reset_offset(init: InitSpec, rng: np.random.Generator) -> np.ndarray:
    """Flat offset (pos 3, vel 3, rotvec 3, omega 3) drawn from ``init``."""
    pos = rng.uniform(-1.0, 1.0, 3) * init.pos_range
    vel = rng.uniform(-1.0, 1.0, 3) * init.vel_range
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, 1.0) * init.rot_angle
    omega = rng.uniform(-1.0, 1.0, 3) * init.omega_range
    return np.concatenate([pos, vel, axis * angle, omega])


def reward(system: TrackingSystem, s: TrackingState, a, cost: CostParams) -> np.ndarray:
    """``-J_X(x, x_ref) - J_U(u, u_ref)``."""
    return -(system.tracking_cost(s.actual, s.reference, cost)
             + effort_cost(a, s.ref_action, cost.c_u))


def transition(system: TrackingSystem, s: TrackingState, a, next_ref_action) -> TrackingState:
    """Deterministic part of the MDP transition with the next reference action supplied."""
    return TrackingState(system.step(s.actual, a),
                         system.step(s.reference, s.ref_action),
                         np.asarray(next_ref_action, dtype=float))


def env_reset(system: TrackingSystem, cfg: EnvConfig, rng: np.random.Generator) -> TrackingState:
    offset = sample_reset_offset(cfg.init, rng)
    ref = system.nominal_state()
    if cfg.init.ref_vel_range > 0:
        # drawn only when enabled so the default streams are unchanged
        ref = ref._replace(v=rng.uniform(-1.0, 1.0, 3) * cfg.init.ref_vel_range)
    actual = system.offset_state(ref, offset)
    return TrackingState(actual, ref, cfg.ref_dist.sample(rng))


def is_finite_state(x) -> np.ndarray:
    return np.all(np.isfinite(x.flat()), axis=-1)


def env_step(system: TrackingSystem, cfg: EnvConfig, s: TrackingState, a,
             rng: np.random.Generator, t: int = 0):
    """One transition from step counter ``t``.

    Returns ``(next_state, reward, done, info)``; ``done`` marks time-limit
    truncation or divergence (``info["diverged"]``).
    """
    r = reward(system, s, a, cfg.cost)
    nxt = transition(system, s, a, cfg.ref_dist.sample(rng))
    diverged = not (is_finite_state(nxt.actual) and is_finite_state(nxt.reference))
    if diverged:
        log.warning("episode diverged at step %d", t + 1)
    done = diverged or (t + 1 >= cfg.episode_length)
    return nxt, float(r), done, {"diverged": diverged, "t": t + 1}


def stack_states(states):
    """Stack a list of TrackingStates along a new leading axis."""
    cls = type(states[0].actual)
    actual = cls(*[np.stack(f) for f in zip(*[s.actual for s in states])])
    ref = cls(*[np.stack(f) for f in zip(*[s.reference for s in states])])
    return TrackingState(actual, ref, np.stack([s.ref_action for s in states]))


def index_state(s: TrackingState, idx) -> TrackingState:
    cls = type(s.actual)
    return TrackingState(cls(*[f[idx] for f in s.actual]),
                         cls(*[f[idx] for f in s.reference]),
                         s.ref_action[idx])


def _assign(dst: TrackingState, idx, src: TrackingState) -> None:
    for a, b in zip(dst.actual, src.actual):
        a[idx] = b
    for a, b in zip(dst.reference, src.reference):
        a[idx] = b
    dst.ref_action[idx] = src.ref_action


def copy_state(s: TrackingState) -> TrackingState:
    cls = type(s.actual)
    return TrackingState(cls(*[np.array(f) for f in s.actual]),
                         cls(*[np.array(f) for f in s.reference]),
                         np.array(s.ref_action))


def worker_threads() -> int:
    try:
        return max(1, int(os.environ.get("SYMTRACK_THREADS", "1")))
    except ValueError:
        return 1


class TrackingEnv:
    """``num_envs`` independent tracking MDPs stepped in lockstep.

    Each environment owns a Philox stream spawned from ``seed`` and its own
    step counter. Physics may be split across ``threads`` workers; every
    random draw happens per environment, so results do not depend on the
    thread count.
    """

    def __init__(self, system: TrackingSystem, cfg: EnvConfig, num_envs: int,
                 seed: int | np.random.SeedSequence = 0, threads: int | None = None):
        self.system = system
        self.cfg = cfg
        self.num_envs = num_envs
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.rngs = [np.random.Generator(np.random.Philox(c)) for c in ss.spawn(num_envs)]
        self.t = np.zeros(num_envs, dtype=np.int64)
        self.threads = worker_threads() if threads is None else threads
        self.state: TrackingState | None = None

    def _reset_one(self, i: int) -> TrackingState:
        return env_reset(self.system, self.cfg, self.rngs[i])

    def reset(self, stagger: bool = False) -> TrackingState:
        """Reset every environment.

        With ``stagger`` the step counters start spread evenly over the
        episode so time-limit resets do not all land in the same rollout.
        """
        self.state = stack_states([self._reset_one(i) for i in range(self.num_envs)])
        self.t[:] = 0
        if stagger:
            L = self.cfg.episode_length
            self.t[:] = (np.arange(self.num_envs) * L) // self.num_envs
        return self.state

    def _chunks(self):
        n = self.num_envs
        k = min(self.threads, n)
        bounds = np.linspace(0, n, k + 1).astype(int)
        return [slice(bounds[j], bounds[j + 1]) for j in range(k)]

    def _physics(self, sl, s, a, z):
        sub = index_state(s, sl)
        r = reward(self.system, sub, a[sl], self.cfg.cost)
        nxt = transition(self.system, sub, a[sl], self.cfg.ref_dist.transform(z[sl]))
        return r, nxt

    def step(self, actions):
        """Advance all environments.

        Returns ``(state, rewards, truncated, diverged, final_state)``. Finished
        environments are reset in place; ``final_state`` holds their last state
        before the reset (the bootstrap point).
        """
        s = self.state
        a = np.asarray(actions, dtype=float)
        z = np.stack([g.standard_normal(self.cfg.ref_dist.dim) for g in self.rngs])
        chunks = self._chunks()
        if len(chunks) == 1:
            results = [self._physics(chunks[0], s, a, z)]
        else:
            with ThreadPoolExecutor(len(chunks)) as ex:
                results = list(ex.map(lambda sl: self._physics(sl, s, a, z), chunks))
        rewards = np.concatenate([r for r, _ in results])
        nxt = copy_state(s)
        for sl, (_, sub) in zip(chunks, results):
            _assign(nxt, sl, sub)

        self.t += 1
        finite = is_finite_state(nxt.actual) & is_finite_state(nxt.reference)
        diverged = ~finite
        truncated = (self.t >= self.cfg.episode_length) | diverged
        final = copy_state(nxt)
        for i in np.flatnonzero(truncated):
            if diverged[i]:
                log.warning("env %d diverged at step %d", i, self.t[i])
            _assign(nxt, i, self._reset_one(i))
            self.t[i] = 0
        self.state = nxt
        return nxt, rewards, truncated, diverged, final
