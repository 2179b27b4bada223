"""Reference generation.

Training references come from Gaussian reference actions. Evaluation uses
pre-planned, dynamically feasible plans: exact discrete inverses of the
particle and rigid-body dynamics, and differential flatness for the
quadrotor.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares
from scipy.sparse import coo_matrix

from .dynamics import (
    E3,
    ParticleParams,
    ParticleState,
    QuadrotorParams,
    RigidParams,
    RigidState,
    particle_step,
    quad_step,
    quad_unmix,
    rigid_step,
)
from .geometry import (
    Pose,
    exp_so3,
    log_se3,
    pose_compose,
    pose_inverse,
    rot_distance,
    rotation_angle,
    vee3,
)
from .tracking_mdp import RefActionDist


class PlanningError(ValueError):
    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} at t={time:.6g} s")
        self.time = time


def sample_ref_action(dist: RefActionDist, rng: np.random.Generator, size=None) -> np.ndarray:
    return dist.sample(rng, size)


STATE_COLUMNS = {
    "particle": ["rx", "ry", "rz", "vx", "vy", "vz"],
    "rigid": [f"R{i}{j}" for i in range(3) for j in range(3)]
    + ["rx", "ry", "rz", "wx", "wy", "wz", "vx", "vy", "vz"],
}
ACTION_COLUMNS = {
    "particle": ["ux", "uy", "uz"],
    "astrobee": ["mux", "muy", "muz", "fx", "fy", "fz"],
    "quadrotor": ["u1", "u2", "u3", "u4"],
}


@dataclass
class ReferencePlan:
    """Reference states ``x_ref[t]`` and actions ``u_ref[t]`` for t = 0..T-1."""

    system: str
    dt: float
    states: ParticleState | RigidState  # batched over T
    actions: np.ndarray
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.actions.shape[0]

    def state(self, t: int):
        return type(self.states)(*[f[t] for f in self.states])

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def columns(self) -> list[str]:
        kind = "particle" if self.system == "particle" else "rigid"
        return ["t"] + STATE_COLUMNS[kind] + ACTION_COLUMNS[self.system]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# system={self.system} dt={self.dt!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        table = np.column_stack([self.times, self.states.flat(), self.actions])
        for row in table:
            w.writerow([f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, source) -> "ReferencePlan":
        text = Path(source).read_text(encoding="utf-8") if isinstance(source, (str, Path)) \
            and not str(source).startswith("#") else str(source)
        lines = text.splitlines()
        meta = dict(item.split("=", 1) for item in lines[0].lstrip("# ").split())
        system, dt = meta["system"], float(meta["dt"])
        rows = list(csv.reader(lines[1:]))
        header, data = rows[0], np.array(rows[1:], dtype=float)
        n_state = 6 if system == "particle" else 18
        expected = ["t"] + STATE_COLUMNS["particle" if system == "particle" else "rigid"] \
            + ACTION_COLUMNS[system]
        if header != expected:
            raise ValueError(f"unexpected plan columns {header}")
        state_cls = ParticleState if system == "particle" else RigidState
        states = state_cls.from_flat(data[:, 1:1 + n_state])
        return cls(system, dt, states, data[:, 1 + n_state:].copy())


# ---------------------------------------------------------------- exact plans

def plan_particle(curve, m: float, dt: float) -> ReferencePlan:
    """Invert the particle dynamics along sampled positions ``curve`` (N, 3)."""
    r = np.asarray(curve, dtype=float)
    if r.ndim != 2 or r.shape[0] < 3:
        raise PlanningError("particle plan needs at least 3 curve samples")
    v = (r[1:] - r[:-1]) / dt
    u = m * (v[1:] - v[:-1]) / dt
    T = u.shape[0]
    return ReferencePlan("particle", dt, ParticleState(r[:T].copy(), v[:T].copy()), u)


def plan_rigid(poses: Pose, params: RigidParams) -> ReferencePlan:
    """Invert the Astrobee dynamics along sampled poses (batched over N)."""
    R, r = np.asarray(poses.R, dtype=float), np.asarray(poses.r, dtype=float)
    if R.shape[0] < 3:
        raise PlanningError("rigid plan needs at least 3 pose samples")
    dt = params.dt
    q0 = Pose(R[:-1], r[:-1])
    q1 = Pose(R[1:], r[1:])
    rel = pose_compose(pose_inverse(q0), q1)
    angle = rotation_angle(rel.R)
    bad = np.flatnonzero(angle >= np.pi - 1e-9)
    if bad.size:
        raise PlanningError("rotation jump of pi or more between samples", bad[0] * dt)
    xi = log_se3(rel) / dt
    w, v = xi[:, :3], xi[:, 3:]
    f = params.m * (v[1:] - v[:-1]) / dt
    Jw = w[:-1] @ params.J.T
    mu = (w[1:] - w[:-1]) @ params.J.T / dt + np.cross(w[:-1], Jw)
    T = f.shape[0]
    states = RigidState(R[:T].copy(), r[:T].copy(), w[:T].copy(), v[:T].copy())
    return ReferencePlan("astrobee", dt, states, np.concatenate([mu, f], axis=-1))


# ---------------------------------------------------------------- Lissajous

@dataclass(frozen=True)
class LissajousSpec:
    """``r(t) = center + A sin(w t + phase)`` per axis.

    ``yaw_*`` drive the quadrotor heading; ``rot_*`` drive a rotation-vector
    Lissajous used for rigid-body (Astrobee) attitude references.
    """

    amplitudes: tuple = (1.0, 1.0, 1.0)
    freqs: tuple = (0.5, 0.5, 0.5)
    phases: tuple = (0.0, 0.0, 0.0)
    center: tuple = (0.0, 0.0, 0.0)
    yaw_amplitude: float = 0.0
    yaw_freq: float = 0.0
    yaw_phase: float = 0.0
    rot_amplitudes: tuple = (0.0, 0.0, 0.0)
    rot_freqs: tuple = (0.0, 0.0, 0.0)
    rot_phases: tuple = (0.0, 0.0, 0.0)
    duration: float = 10.0

    def __post_init__(self):
        if min(self.freqs) < 0 or self.yaw_freq < 0 or min(self.rot_freqs) < 0:
            raise ValueError("Lissajous frequencies must be >= 0")
        if not self.duration > 0:
            raise ValueError("Lissajous duration must be > 0")

    def position(self, t, order: int = 0) -> np.ndarray:
        """k-th time derivative of the position, shape (len(t), 3)."""
        t = np.asarray(t, dtype=float)[:, None]
        A, w, ph = (np.asarray(x, dtype=float) for x in (self.amplitudes, self.freqs, self.phases))
        out = A * w**order * np.sin(w * t + ph + order * np.pi / 2)
        return out + (np.asarray(self.center, dtype=float) if order == 0 else 0.0)

    def yaw(self, t, order: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        A, w = self.yaw_amplitude, self.yaw_freq
        return A * w**order * np.sin(w * t + self.yaw_phase + order * np.pi / 2)

    def rotvec(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)[:, None]
        A, w, ph = (np.asarray(x, dtype=float) for x in (self.rot_amplitudes, self.rot_freqs,
                                                          self.rot_phases))
        return A * np.sin(w * t + ph)

    def times(self, dt: float, extra: int = 0) -> np.ndarray:
        n = int(round(self.duration / dt)) + 1 + extra
        return np.arange(n) * dt


def plan_particle_lissajous(spec: LissajousSpec, params: ParticleParams) -> ReferencePlan:
    t = spec.times(params.dt, extra=2)
    return plan_particle(spec.position(t), params.m, params.dt)


def plan_rigid_lissajous(spec: LissajousSpec, params: RigidParams) -> ReferencePlan:
    t = spec.times(params.dt, extra=2)
    poses = Pose(exp_so3(spec.rotvec(t)), spec.position(t))
    return plan_rigid(poses, params)


def _unit_derivs(w, wd, wdd):
    """n = w/|w| and its first two time derivatives."""
    s = np.linalg.norm(w, axis=-1, keepdims=True)
    n = w / s
    sd = np.sum(n * wd, axis=-1, keepdims=True)
    nd = (wd - n * sd) / s
    sdd = np.sum(nd * wd + n * wdd, axis=-1, keepdims=True)
    ndd = (wdd - 2.0 * nd * sd - n * sdd) / s
    return n, nd, ndd


def flat_outputs_to_state(pos_derivs, yaw_derivs, params: QuadrotorParams):
    """Differential-flatness map.

    ``pos_derivs`` holds position derivatives of order 0..4 (each (N, 3)),
    ``yaw_derivs`` yaw derivatives of order 0..2. Returns
    ``(R, omega, omega_dot, thrust)`` with body-frame rates.
    """
    _, vel, acc, jerk, snap = pos_derivs
    psi, psi_d, psi_dd = yaw_derivs
    a = acc + params.g * E3
    norm_a = np.linalg.norm(a, axis=-1)
    z, zd, zdd = _unit_derivs(a, jerk, snap)

    c, s = np.cos(psi)[:, None], np.sin(psi)[:, None]
    zero = np.zeros_like(c)
    xc = np.hstack([c, s, zero])
    xc_perp = np.hstack([-s, c, zero])
    xcd = psi_d[:, None] * xc_perp
    xcdd = psi_dd[:, None] * xc_perp - psi_d[:, None] ** 2 * xc

    w = np.cross(z, xc)
    wd = np.cross(zd, xc) + np.cross(z, xcd)
    wdd = np.cross(zdd, xc) + 2.0 * np.cross(zd, xcd) + np.cross(z, xcdd)
    y, yd, ydd = _unit_derivs(w, wd, wdd)
    x = np.cross(y, z)
    xd = np.cross(yd, z) + np.cross(y, zd)
    xdd = np.cross(ydd, z) + 2.0 * np.cross(yd, zd) + np.cross(y, zdd)

    R = np.stack([x, y, z], axis=-1)
    Rd = np.stack([xd, yd, zd], axis=-1)
    Rdd = np.stack([xdd, ydd, zdd], axis=-1)
    Rt = np.swapaxes(R, -1, -2)
    omega = vee3(Rt @ Rd)
    omega_dot = vee3(Rt @ Rdd)
    thrust = params.m * norm_a
    return R, omega, omega_dot, thrust, np.linalg.norm(w, axis=-1), norm_a


def attitude_from_thrust_axis(z, yaw, singular_tol: float = 1e-6) -> np.ndarray:
    """Rotation with third column ``z`` (unit) and heading ``yaw``."""
    z = np.asarray(z, dtype=float)
    yaw = np.asarray(yaw, dtype=float)
    xc = np.stack([np.cos(yaw), np.sin(yaw), np.zeros_like(yaw)], axis=-1)
    w = np.cross(z, xc)
    n = np.linalg.norm(w, axis=-1, keepdims=True)
    if np.any(n < singular_tol):
        raise PlanningError("heading undefined (thrust axis parallel to yaw direction)")
    y = w / n
    return np.stack([np.cross(y, z), y, z], axis=-1)


def _discrete_quad_wrench(R, r, params: QuadrotorParams):
    """Twists, body forces and torques implied by a pose sequence.

    Uses the exact inverse of the Lie-Euler kinematics, like :func:`plan_rigid`.
    Returns arrays over t = 0..N-3.
    """
    dt = params.dt
    rel = pose_compose(pose_inverse(Pose(R[:-1], r[:-1])), Pose(R[1:], r[1:]))
    xi = log_se3(rel) / dt
    w, v = xi[:, :3], xi[:, 3:]
    f_body = params.m * ((v[1:] - v[:-1]) / dt + params.g * R[:-2, 2, :])
    J = params.rigid.J
    torque = (w[1:] - w[:-1]) @ J.T / dt + np.cross(w[:-1], w[:-1] @ J.T)
    return xi[:-1], f_body, torque


def _refine_attitudes(R, r, yaw, params: QuadrotorParams, tol: float, reg: float = 1e-6):
    """Tilt the attitudes so every thrust axis matches the discrete dynamics.

    Unknowns are two tilt angles per sample about the continuous-flatness
    attitude (yaw is kept). Residuals are the lateral body forces the exact
    discrete inverse would need, which the rotors cannot produce. Stepwise
    inversion is ill-posed where the frame-carried velocity term cancels
    gravity, so all tilts are solved jointly by sparse least squares with a
    weak pull toward the continuous solution to fix the free boundary.
    """
    N = R.shape[0]
    z0, b0, b1 = R[:, :, 2], R[:, :, 0], R[:, :, 1]

    def attitudes(x):
        th = x.reshape(N, 2)
        z = z0 + th[:, :1] * b0 + th[:, 1:] * b1
        return attitude_from_thrust_axis(z / np.linalg.norm(z, axis=1, keepdims=True), yaw)

    def residual(x):
        _, f_body, _ = _discrete_quad_wrench(attitudes(x), r, params)
        return np.concatenate([f_body[:, :2].ravel() / params.m, reg * x])

    # residuals at t touch the tilts at t, t+1, t+2
    rows, cols = [], []
    for t in range(N - 2):
        for k in range(2):
            rows += [2 * t + k] * 6
            cols += list(range(2 * t, 2 * t + 6))
    rows += list(range(2 * (N - 2), 2 * (N - 2) + 2 * N))
    cols += list(range(2 * N))
    pattern = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(4 * N - 4, 2 * N))
    sol = least_squares(residual, np.zeros(2 * N), jac_sparsity=pattern, method="trf",
                        x_scale="jac", xtol=tol, ftol=tol, gtol=tol)
    return attitudes(sol.x), {"solver_status": int(sol.status), "solver_evals": int(sol.nfev)}


def plan_quadrotor_lissajous(spec: LissajousSpec, params: QuadrotorParams,
                             discrete: bool = True, tol: float = 1e-15,
                             singular_tol: float = 1e-6) -> ReferencePlan:
    """Flatness-based quadrotor plan sampled every ``params.dt``.

    The continuous flatness map gives attitudes from the thrust direction
    ``p_ddot + g e3`` and yaw, body rates from jerk and torques from snap.
    With ``discrete=True`` the attitudes are then re-tilted so each thrust
    axis is parallel to the acceleration the discrete dynamics need between
    samples; twists and wrenches come from the exact discrete inverse and
    open-loop replay through ``quad_step`` stays on the plan. Positions and
    yaw are never altered. Rotor thrusts carry the lateral force residual
    left by the solver (reported in ``info``) as dropped terms.
    """
    t = spec.times(params.dt, extra=2 if discrete else 0)
    pos = [spec.position(t, k) for k in range(5)]
    yaw = [spec.yaw(t, k) for k in range(3)]
    a_norm = np.linalg.norm(pos[2] + params.g * E3, axis=-1)
    bad = np.flatnonzero(a_norm < singular_tol * max(params.g, 1.0))
    if bad.size:
        raise PlanningError("thrust direction undefined (free fall)", t[bad[0]])
    bad = np.flatnonzero(pos[2][:, 2] + params.g <= 0.0)
    if bad.size:
        raise PlanningError("thrust axis points downward (inverted flight not supported)", t[bad[0]])
    R, omega, omega_dot, thrust, heading_norm, _ = flat_outputs_to_state(pos, yaw, params)
    bad = np.flatnonzero(heading_norm < singular_tol)
    if bad.size:
        raise PlanningError("heading undefined (thrust axis parallel to yaw direction)", t[bad[0]])

    if not discrete:
        bad = np.flatnonzero(~(thrust > 0))
        if bad.size:
            raise PlanningError("required thrust is not positive", t[bad[0]])
        J = params.rigid.J
        torque = omega_dot @ J.T + np.cross(omega, omega @ J.T)
        u = quad_unmix(thrust, torque, params)
        v_body = np.einsum("nji,nj->ni", R, pos[1])
        return ReferencePlan("quadrotor", params.dt, RigidState(R, pos[0], omega, v_body), u,
                             {"method": "continuous"})

    r = pos[0]
    R, solver = _refine_attitudes(R, r, yaw[0], params, tol)
    xi, f_body, torque = _discrete_quad_wrench(R, r, params)
    thrust = f_body[:, 2]
    bad = np.flatnonzero(~(thrust > 0))
    if bad.size:
        raise PlanningError("required thrust is not positive", t[bad[0]])
    T = thrust.shape[0]
    u = quad_unmix(thrust, torque, params)
    states = RigidState(R[:T], r[:T].copy(), xi[:, :3].copy(), xi[:, 3:].copy())
    info = {"method": "discrete", "lateral_force_residual": float(np.max(np.abs(f_body[:, :2]))),
            **solver}
    return ReferencePlan("quadrotor", params.dt, states, u, info)


# ---------------------------------------------------------------- replay

def replay(plan: ReferencePlan, params) -> ParticleState | RigidState:
    """Open-loop replay of the plan's actions from its first state."""
    step = {"particle": particle_step, "astrobee": rigid_step, "quadrotor": quad_step}[plan.system]
    x = plan.state(0)
    out = [x]
    for t in range(len(plan) - 1):
        x = step(x, plan.actions[t], params)
        out.append(x)
    cls = type(x)
    return cls(*[np.stack(f) for f in zip(*out)])


def replay_report(plan: ReferencePlan, params) -> dict:
    """Max deviation between replayed and planned states, per component."""
    rep = replay(plan, params)
    ref = plan.states
    out = {"position": float(np.max(np.linalg.norm(rep.r - ref.r, axis=-1))),
           "velocity": float(np.max(np.linalg.norm(rep.v - ref.v, axis=-1)))}
    if plan.system != "particle":
        out["rotation"] = float(np.max(rot_distance(rep.R, ref.R)))
        out["angular_velocity"] = float(np.max(np.linalg.norm(rep.w - ref.w, axis=-1)))
    out["max"] = max(out.values())
    out["drift_per_dt"] = out["position"] / plan.dt
    return out


# ---------------------------------------------------------------- evaluation sets

@dataclass(frozen=True)
class TrajectorySetRanges:
    """Parameter ranges for seeded random evaluation trajectories."""

    amplitude: tuple = (0.5, 1.5)
    freq: tuple = (0.2, 0.6)
    yaw_amplitude: tuple = (0.0, 0.5)
    yaw_freq: tuple = (0.1, 0.4)
    rot_amplitude: tuple = (0.2, 0.8)
    rot_freq: tuple = (0.1, 0.4)
    center: float = 0.0  # centers uniform in [-center, center]^3
    duration: float = 10.0


def random_lissajous(rng: np.random.Generator, system: str,
                     ranges: TrajectorySetRanges = TrajectorySetRanges()) -> LissajousSpec:
    u = rng.uniform
    kw = dict(
        amplitudes=tuple(u(*ranges.amplitude, 3)),
        freqs=tuple(u(*ranges.freq, 3)),
        phases=tuple(u(0.0, 2 * np.pi, 3)),
        center=tuple(u(-ranges.center, ranges.center, 3)) if ranges.center > 0 else (0.0, 0.0, 0.0),
        duration=ranges.duration,
    )
    if system == "quadrotor":
        kw.update(yaw_amplitude=u(*ranges.yaw_amplitude), yaw_freq=u(*ranges.yaw_freq),
                  yaw_phase=u(0.0, 2 * np.pi))
    elif system == "astrobee":
        kw.update(rot_amplitudes=tuple(u(*ranges.rot_amplitude, 3)),
                  rot_freqs=tuple(u(*ranges.rot_freq, 3)), rot_phases=tuple(u(0.0, 2 * np.pi, 3)))
    return LissajousSpec(**kw)


def plan_lissajous(system: str, spec: LissajousSpec, params) -> ReferencePlan:
    if system == "particle":
        return plan_particle_lissajous(spec, params)
    if system == "astrobee":
        return plan_rigid_lissajous(spec, params)
    if system == "quadrotor":
        return plan_quadrotor_lissajous(spec, params)
    raise ValueError(f"unknown system {system!r}")


def evaluation_set(system: str, params, n: int = 20, seed: int = 0,
                   ranges: TrajectorySetRanges = TrajectorySetRanges()) -> list[ReferencePlan]:
    """``n`` seeded random Lissajous plans for zero-shot evaluation."""
    rng = np.random.default_rng(seed)
    return [plan_lissajous(system, random_lissajous(rng, system, ranges), params) for _ in range(n)]
