"""Discrete-time transition functions for the particle, the Astrobee and the quadrotor.

All right-hand sides use time-t values (explicit Lie-Euler). Functions
broadcast over a leading batch dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import Pose, exp_se3, pose_compose

E3 = np.array([0.0, 0.0, 1.0])


class ParticleState(NamedTuple):
    r: np.ndarray
    v: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.r, self.v], axis=-1)

    @classmethod
    def from_flat(cls, x) -> "ParticleState":
        x = np.asarray(x, dtype=float)
        return cls(x[..., 0:3], x[..., 3:6])


class RigidState(NamedTuple):
    """Pose ``(R, r)`` and body twist ``(w, v)``.

    Flat layout: R row-major (9), r (3), w (3), v (3).
    """

    R: np.ndarray
    r: np.ndarray
    w: np.ndarray
    v: np.ndarray

    @property
    def pose(self) -> Pose:
        return Pose(self.R, self.r)

    @property
    def twist(self) -> np.ndarray:
        return np.concatenate([self.w, self.v], axis=-1)

    def flat(self) -> np.ndarray:
        R = np.asarray(self.R)
        return np.concatenate(
            [R.reshape(R.shape[:-2] + (9,)), self.r, self.w, self.v], axis=-1)

    @classmethod
    def from_flat(cls, x) -> "RigidState":
        x = np.asarray(x, dtype=float)
        R = x[..., 0:9].reshape(x.shape[:-1] + (3, 3))
        return cls(R, x[..., 9:12], x[..., 12:15], x[..., 15:18])

    @classmethod
    def from_pose(cls, q: Pose, xi) -> "RigidState":
        xi = np.asarray(xi, dtype=float)
        return cls(np.asarray(q.R, dtype=float), np.asarray(q.r, dtype=float),
                   xi[..., :3], xi[..., 3:])


@dataclass(frozen=True)
class ParticleParams:
    m: float
    dt: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"particle mass must be positive, got m={self.m}")
        if not self.dt > 0:
            raise ValueError(f"timestep must be positive, got dt={self.dt}")


@dataclass(frozen=True)
class RigidParams:
    m: float
    J: np.ndarray
    dt: float

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        if J.ndim == 1:
            J = np.diag(J)
        if J.shape != (3, 3):
            raise ValueError(f"inertia J must be 3x3 or a 3-vector diagonal, got shape {J.shape}")
        if not np.allclose(J, J.T, atol=1e-12) or np.linalg.eigvalsh(J).min() <= 0:
            raise ValueError("inertia J must be symmetric positive definite")
        if not self.m > 0:
            raise ValueError(f"mass must be positive, got m={self.m}")
        if not self.dt > 0:
            raise ValueError(f"timestep must be positive, got dt={self.dt}")
        J.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "J_inv", np.linalg.inv(J))


@dataclass(frozen=True)
class QuadrotorParams:
    rigid: RigidParams
    arm: float
    drag: float
    g: float

    def __post_init__(self):
        if not self.arm > 0:
            raise ValueError(f"arm length must be positive, got {self.arm}")
        if not self.drag > 0:
            raise ValueError(f"drag coefficient must be positive, got {self.drag}")
        if not self.g >= 0:
            raise ValueError(f"gravity must be non-negative, got {self.g}")
        M = np.array([
            [1.0, 1.0, 1.0, 1.0],
            [self.arm, 0.0, -self.arm, 0.0],
            [0.0, self.arm, 0.0, -self.arm],
            [self.drag, -self.drag, self.drag, -self.drag],
        ])
        object.__setattr__(self, "mix_matrix", M)
        object.__setattr__(self, "unmix_matrix", np.linalg.inv(M))

    @property
    def m(self) -> float:
        return self.rigid.m

    @property
    def dt(self) -> float:
        return self.rigid.dt

    @property
    def hover_thrust(self) -> float:
        """Per-rotor thrust that balances gravity."""
        return self.rigid.m * self.g / 4.0


def particle_step(x: ParticleState, u, p: ParticleParams) -> ParticleState:
    u = np.asarray(u, dtype=float)
    return ParticleState(x.r + x.v * p.dt, x.v + u * (p.dt / p.m))


def _euler_rates(w, mu, p: RigidParams):
    Jw = w @ p.J.T
    return (mu - np.cross(w, Jw)) @ p.J_inv.T


def rigid_step(x: RigidState, u, p: RigidParams) -> RigidState:
    """Lie-Euler step; ``u`` is the body wrench ``(torque, force)``."""
    u = np.asarray(u, dtype=float)
    mu, f = u[..., :3], u[..., 3:]
    q = pose_compose(x.pose, exp_se3(x.twist, p.dt))
    v = x.v + f * (p.dt / p.m)
    w = x.w + _euler_rates(x.w, mu, p) * p.dt
    return RigidState(q.R, q.r, w, v)


def quad_mix(u, p: QuadrotorParams) -> np.ndarray:
    """Rotor thrusts -> body wrench ``(torque, force)``; no clamping."""
    u = np.asarray(u, dtype=float)
    u1, u2, u3, u4 = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
    zero = np.zeros_like(u1)
    return np.stack([
        p.arm * (u1 - u3),
        p.arm * (u2 - u4),
        p.drag * (u1 - u2 + u3 - u4),
        zero,
        zero,
        u1 + u2 + u3 + u4,
    ], axis=-1)


def quad_unmix(thrust, torque, p: QuadrotorParams) -> np.ndarray:
    """Rotor thrusts realizing collective ``thrust`` and body ``torque``."""
    rhs = np.concatenate([np.asarray(thrust, dtype=float)[..., None],
                          np.asarray(torque, dtype=float)], axis=-1)
    return rhs @ p.unmix_matrix.T


def quad_step(x: RigidState, u, p: QuadrotorParams) -> RigidState:
    wrench = quad_mix(u, p)
    mu, f = wrench[..., :3], wrench[..., 3:]
    rp = p.rigid
    q = pose_compose(x.pose, exp_se3(x.twist, rp.dt))
    # R^T (g e3) is the third row of R scaled by g
    g_body = p.g * np.asarray(x.R)[..., 2, :]
    v = x.v + (f / rp.m - g_body) * rp.dt
    w = x.w + _euler_rates(x.w, mu, rp) * rp.dt
    return RigidState(q.R, q.r, w, v)
