"""Group actions on tracking states, quotient observations and policy lifting.

Particle: the group T R^3 x R^3 acts by ``(r, v, r_ref, v_ref, u_ref) +
(k1, k2, k1, k2, h)`` and on actions by ``u + h``. Rigid systems: a pose ``k``
left-multiplies both the actual and the reference pose, twists and actions are
untouched. The quadrotor keeps only yaw rotations and translations.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .dynamics import ParticleParams, ParticleState, RigidState
from .geometry import (
    Pose,
    pose_compose,
    pose_inverse,
    random_rotation,
    rot_z,
    yaw_zyx,
)
from .tracking_mdp import (
    CostParams,
    TrackingState,
    TrackingSystem,
    alpha,
    effort_cost,
    reward,
    transition,
)


class ReductionKind(Enum):
    BASELINE = "baseline"
    PARTICLE_TRANSLATION = "translation"
    PARTICLE_TRANSLATION_VELOCITY = "translation-velocity"
    PARTICLE_FULL = "full"
    RIGID_SE3 = "se3"
    QUAD_SE2XR = "se2xr"

    @classmethod
    def parse(cls, name: str) -> "ReductionKind":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown reduction {name!r} (expected one of {valid})") from None


TRAINABLE = {
    "particle": (ReductionKind.BASELINE, ReductionKind.PARTICLE_TRANSLATION,
                 ReductionKind.PARTICLE_TRANSLATION_VELOCITY, ReductionKind.PARTICLE_FULL),
    "astrobee": (ReductionKind.BASELINE, ReductionKind.RIGID_SE3),
    "quadrotor": (ReductionKind.BASELINE, ReductionKind.QUAD_SE2XR),
}

# full SE(3) reduction of the quadrotor is not a symmetry, but verify may probe it
VERIFIABLE = dict(TRAINABLE, quadrotor=TRAINABLE["quadrotor"] + (ReductionKind.RIGID_SE3,))


def check_compatible(env: str, kind: ReductionKind, verify: bool = False) -> None:
    table = VERIFIABLE if verify else TRAINABLE
    if env not in table:
        raise ValueError(f"env={env!r} is not one of {sorted(table)}")
    if kind not in table[env]:
        allowed = ", ".join(k.value for k in table[env])
        raise ValueError(f"reduction={kind.value!r} is not valid for env={env!r} (allowed: {allowed})")


# ---------------------------------------------------------------- group elements

@dataclass(frozen=True)
class ParticleGroupElement:
    """Element ``((k1, k2), h)`` of T R^3 x R^3."""

    k1: np.ndarray
    k2: np.ndarray
    h: np.ndarray

    @classmethod
    def identity(cls, batch=()):
        z = np.zeros(batch + (3,))
        return cls(z, z.copy(), z.copy())

    def compose(self, other: "ParticleGroupElement") -> "ParticleGroupElement":
        return ParticleGroupElement(self.k1 + other.k1, self.k2 + other.k2, self.h + other.h)

    def inverse(self) -> "ParticleGroupElement":
        return ParticleGroupElement(-self.k1, -self.k2, -self.h)


@dataclass(frozen=True)
class SE3Element:
    """Pose acting by left multiplication. SE(2)xR elements use ``se2xr``."""

    k: Pose

    @classmethod
    def identity(cls, batch=()):
        R = np.broadcast_to(np.eye(3), batch + (3, 3)).copy()
        return cls(Pose(R, np.zeros(batch + (3,))))

    def compose(self, other: "SE3Element") -> "SE3Element":
        return SE3Element(pose_compose(self.k, other.k))

    def inverse(self) -> "SE3Element":
        return SE3Element(pose_inverse(self.k))


def se2xr(theta, r) -> SE3Element:
    """Yaw rotation about e3 plus an arbitrary translation."""
    return SE3Element(Pose(rot_z(theta), np.asarray(r, dtype=float)))


GroupElement = ParticleGroupElement | SE3Element


def act_state(g: GroupElement, s: TrackingState) -> TrackingState:
    if isinstance(g, ParticleGroupElement):
        if not isinstance(s.actual, ParticleState):
            raise TypeError("particle group element applied to a rigid-body state")
        return TrackingState(
            ParticleState(s.actual.r + g.k1, s.actual.v + g.k2),
            ParticleState(s.reference.r + g.k1, s.reference.v + g.k2),
            s.ref_action + g.h)
    if isinstance(g, SE3Element):
        if not isinstance(s.actual, RigidState):
            raise TypeError("SE(3) group element applied to a particle state")
        return TrackingState(_left(g.k, s.actual), _left(g.k, s.reference), s.ref_action)
    raise TypeError(f"unsupported group element {type(g).__name__}")


def _left(k: Pose, x: RigidState) -> RigidState:
    q = pose_compose(k, x.pose)
    return RigidState(q.R, q.r, x.w, x.v)


def act_action(g: GroupElement, a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if isinstance(g, ParticleGroupElement):
        return a + g.h
    return a


# ---------------------------------------------------------------- reduction

class LiftContext(NamedTuple):
    kind: ReductionKind
    ref_action: np.ndarray | None = None


def _flat_pose(q: Pose) -> np.ndarray:
    R = np.asarray(q.R)
    return np.concatenate([R.reshape(R.shape[:-2] + (9,)), q.r], axis=-1)


def obs_dim(kind: ReductionKind, system: TrackingSystem) -> int:
    n, m = system.state_dim, system.action_dim
    return {
        ReductionKind.BASELINE: 2 * n + m,
        ReductionKind.PARTICLE_TRANSLATION: 9 + m,
        ReductionKind.PARTICLE_TRANSLATION_VELOCITY: 6 + m,
        ReductionKind.PARTICLE_FULL: 6,
        ReductionKind.RIGID_SE3: 12 + 12 + m,
        ReductionKind.QUAD_SE2XR: 15 + 12 + m,
    }[kind]


def reduce(s: TrackingState, kind: ReductionKind):
    """Quotient observation ``p(s)`` and the context needed to lift actions.

    Layouts (fixed order):

    * baseline: ``(x, x_ref, u_ref)``
    * translation: ``(r - r_ref, v, v_ref, u_ref)``
    * translation-velocity: ``(r - r_ref, v - v_ref, u_ref)``
    * full: ``(r - r_ref, v - v_ref)``
    * se3: ``(q^-1 q_ref as R 9 + r 3, xi, xi_ref, u_ref)``
    * se2xr: se3 layout with ``R^T e3`` inserted after the pose error
    """
    x, xr, ud = s.actual, s.reference, np.asarray(s.ref_action, dtype=float)
    ctx = LiftContext(kind, ud)
    if kind is ReductionKind.BASELINE:
        return np.concatenate([x.flat(), xr.flat(), ud], axis=-1), ctx
    if kind is ReductionKind.PARTICLE_TRANSLATION:
        return np.concatenate([x.r - xr.r, x.v, xr.v, ud], axis=-1), ctx
    if kind is ReductionKind.PARTICLE_TRANSLATION_VELOCITY:
        return np.concatenate([x.r - xr.r, x.v - xr.v, ud], axis=-1), ctx
    if kind is ReductionKind.PARTICLE_FULL:
        return np.concatenate([x.r - xr.r, x.v - xr.v], axis=-1), ctx
    q_err = _flat_pose(pose_compose(pose_inverse(x.pose), xr.pose))
    if kind is ReductionKind.RIGID_SE3:
        return np.concatenate([q_err, x.twist, xr.twist, ud], axis=-1), ctx
    if kind is ReductionKind.QUAD_SE2XR:
        gravity_dir = np.asarray(x.R)[..., 2, :]  # R^T e3
        return np.concatenate([q_err, gravity_dir, x.twist, xr.twist, ud], axis=-1), ctx
    raise ValueError(f"unsupported reduction {kind}")


def lift_action(a_reduced, ctx: LiftContext) -> np.ndarray:
    """Map a quotient-policy action back to a physical action."""
    a_reduced = np.asarray(a_reduced, dtype=float)
    if ctx.kind in (ReductionKind.PARTICLE_FULL, ReductionKind.PARTICLE_TRANSLATION_VELOCITY):
        if ctx.ref_action is None:
            raise ValueError(f"lifting for {ctx.kind.value} needs the reference action")
        return a_reduced + ctx.ref_action
    return a_reduced


def action_map(s: TrackingState, a, kind: ReductionKind) -> np.ndarray:
    """``h(s, a)``, the inverse of :func:`lift_action` at ``s``."""
    a = np.asarray(a, dtype=float)
    if kind in (ReductionKind.PARTICLE_FULL, ReductionKind.PARTICLE_TRANSLATION_VELOCITY):
        return a - s.ref_action
    return a


def quotient_step_particle(obs, a_reduced, p: ParticleParams) -> np.ndarray:
    """Error dynamics on ``(r_err, v_err)``."""
    obs = np.asarray(obs, dtype=float)
    re, ve = obs[..., 0:3], obs[..., 3:6]
    return np.concatenate([re + ve * p.dt, ve + np.asarray(a_reduced) * (p.dt / p.m)], axis=-1)


def quotient_reward_particle(obs, a_reduced, cost: CostParams) -> np.ndarray:
    obs = np.asarray(obs, dtype=float)
    return -(alpha(obs[..., 0:3], cost.c_r, cost.a_r)
             + cost.c_v * np.linalg.norm(obs[..., 3:6], axis=-1)
             + effort_cost(a_reduced, 0.0, cost.c_u))


# ---------------------------------------------------------------- equivariant map

def section(s: TrackingState, kind: ReductionKind) -> GroupElement:
    """Equivariant map ``lambda(s)`` into the group reduced by ``kind``."""
    x, xr = s.actual, s.reference
    if isinstance(x, ParticleState):
        z = np.zeros_like(xr.r)
        if kind is ReductionKind.PARTICLE_TRANSLATION:
            return ParticleGroupElement(xr.r, z, z.copy())
        if kind is ReductionKind.PARTICLE_TRANSLATION_VELOCITY:
            return ParticleGroupElement(xr.r, xr.v, z)
        if kind is ReductionKind.PARTICLE_FULL:
            return ParticleGroupElement(xr.r, xr.v, np.asarray(s.ref_action))
        return ParticleGroupElement.identity(xr.r.shape[:-1])
    if kind is ReductionKind.RIGID_SE3:
        return SE3Element(x.pose)
    if kind is ReductionKind.QUAD_SE2XR:
        return se2xr(yaw_zyx(x.R), x.r)
    return SE3Element.identity(np.asarray(x.r).shape[:-1])


def canonical_state(s: TrackingState, kind: ReductionKind) -> TrackingState:
    """Representative ``lambda(s)^-1 . s`` of the orbit of ``s``."""
    return act_state(section(s, kind).inverse(), s)


def next_group_element(g: GroupElement, system: TrackingSystem) -> GroupElement:
    """``k'`` with ``f(Upsilon_k x, Theta_h u) = Upsilon_k' f(x, u)``."""
    if isinstance(g, ParticleGroupElement):
        p = system.params
        return ParticleGroupElement(g.k1 + g.k2 * p.dt, g.k2 + g.h * (p.dt / p.m), g.h)
    return g


# ---------------------------------------------------------------- verification

def sample_group(system: TrackingSystem, kind: ReductionKind, rng: np.random.Generator,
                 n: int, scale: float = 10.0) -> GroupElement:
    """Random elements of the group that ``kind`` reduces by."""
    if system.name == "particle":
        k1 = rng.uniform(-scale, scale, (n, 3))
        k2 = rng.uniform(-scale, scale, (n, 3))
        h = rng.uniform(-scale, scale, (n, 3))
        if kind is ReductionKind.PARTICLE_TRANSLATION:
            k2[:] = 0.0
            h[:] = 0.0
        elif kind is ReductionKind.PARTICLE_TRANSLATION_VELOCITY:
            h[:] = 0.0
        return ParticleGroupElement(k1, k2, h)
    t = rng.uniform(-scale, scale, (n, 3))
    if kind is ReductionKind.RIGID_SE3 or (kind is ReductionKind.BASELINE and system.name == "astrobee"):
        return SE3Element(Pose(random_rotation(rng, n), t))
    return se2xr(rng.uniform(-np.pi, np.pi, n), t)


def sample_states(system: TrackingSystem, rng: np.random.Generator, n: int,
                  scale: float = 5.0) -> TrackingState:
    """Broad random tracking states for property checks."""
    m = system.action_dim
    if system.name == "particle":
        x = ParticleState(rng.uniform(-scale, scale, (n, 3)), rng.uniform(-scale, scale, (n, 3)))
        xr = ParticleState(rng.uniform(-scale, scale, (n, 3)), rng.uniform(-scale, scale, (n, 3)))
        return TrackingState(x, xr, rng.normal(0.0, scale, (n, m)))

    def rigid():
        R = random_rotation(rng, n)
        # keep clear of Z-Y-X gimbal lock where yaw is undefined
        bad = np.abs(R[:, 2, 0]) > 1.0 - 1e-6
        while bad.any():
            R[bad] = random_rotation(rng, int(bad.sum()))
            bad = np.abs(R[:, 2, 0]) > 1.0 - 1e-6
        return RigidState(R, rng.uniform(-scale, scale, (n, 3)),
                          rng.normal(0.0, 1.0, (n, 3)), rng.normal(0.0, 1.0, (n, 3)))

    return TrackingState(rigid(), rigid(), rng.normal(0.0, 1.0, (n, m)))


def sample_actions(system: TrackingSystem, rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.normal(0.0, 2.0, (n, system.action_dim))


def _dev(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def _state_dev(s1: TrackingState, s2: TrackingState) -> float:
    return max(_dev(s1.actual.flat(), s2.actual.flat()),
               _dev(s1.reference.flat(), s2.reference.flat()),
               _dev(s1.ref_action, s2.ref_action))


TOLERANCE = 1e-9


@dataclass
class VerifyReport:
    env: str
    kind: ReductionKind
    samples: int
    deviations: dict[str, float] = field(default_factory=dict)
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return all(d < self.tolerance for d in self.deviations.values())

    def rows(self):
        for name, d in self.deviations.items():
            yield name, self.samples, d, d < self.tolerance

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["env", "reduction", "check", "samples", "max_deviation", "passed"])
        for name, n, d, ok in self.rows():
            w.writerow([self.env, self.kind.value, name, n, f"{d:.17g}", "pass" if ok else "FAIL"])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"symmetry check: env={self.env} reduction={self.kind.value} samples={self.samples}"]
        for name, n, d, ok in self.rows():
            lines.append(f"  {name:<26s} max dev {d:10.3e}  {'pass' if ok else 'FAIL'}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def verify_symmetry(system: TrackingSystem, kind: ReductionKind, n_samples: int,
                    rng: np.random.Generator, cost: CostParams | None = None) -> VerifyReport:
    """Randomized check of the symmetry and homomorphism conditions.

    Reports the maximum deviation over ``n_samples`` draws for reward
    invariance, deterministic transition equivariance (reference-action draw
    shared), orbit invariance of ``reduce`` and commutation of ``reduce`` with
    the transition under lifted actions.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    cost = cost or CostParams()
    n = n_samples
    s = sample_states(system, rng, n)
    a = sample_actions(system, rng, n)
    ud_next = rng.normal(0.0, 1.0, (n, system.action_dim))
    g = sample_group(system, kind, rng, n)
    gs, ga = act_state(g, s), act_action(g, a)

    dev = {}
    dev["reward_invariance"] = _dev(reward(system, s, a, cost), reward(system, gs, ga, cost))

    lhs = transition(system, gs, ga, ud_next)
    rhs = transition(system, s, a, ud_next)
    gp = next_group_element(g, system)
    if isinstance(gp, ParticleGroupElement):
        gp = ParticleGroupElement(gp.k1, gp.k2, np.zeros_like(gp.h))
    dev["transition_equivariance"] = _state_dev(lhs, act_state(gp, rhs))

    if kind is ReductionKind.BASELINE:
        dev["orbit_invariance"] = 0.0
        dev["reduce_step_commutation"] = 0.0
        return VerifyReport(system.name, kind, n, dev)

    obs, _ = reduce(s, kind)
    obs_g, _ = reduce(gs, kind)
    dev["orbit_invariance"] = _dev(obs, obs_g)

    # reduced dynamics must not depend on which orbit member is stepped
    a_red = sample_actions(system, rng, n)
    obs_next = reduce(transition(system, s, lift_action(a_red, reduce(s, kind)[1]), ud_next), kind)[0]
    c = canonical_state(s, kind)
    obs_canon = reduce(transition(system, c, lift_action(a_red, reduce(c, kind)[1]), ud_next), kind)[0]
    d = _dev(obs_next, obs_canon)
    if kind is ReductionKind.PARTICLE_FULL:
        d = max(d, _dev(obs_next, quotient_step_particle(obs, a_red, system.params)))
    dev["reduce_step_commutation"] = d
    return VerifyReport(system.name, kind, n, dev)
