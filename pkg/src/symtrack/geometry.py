"""SO(3) / SE(3) primitives on plain numpy arrays.

Rotations are full 3x3 matrices. Every function broadcasts over leading
batch dimensions, so ``exp_so3`` accepts ``(3,)`` or ``(N, 3)`` and returns
``(3, 3)`` or ``(N, 3, 3)`` respectively.

Twists are ordered ``(omega, v)`` and wrenches ``(torque, force)``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

# below this angle exp/log switch to second-order Taylor branches
SMALL_ANGLE = 1e-8
# log_so3 reads the axis from the symmetric part once cos(angle) < 0
_PI_BRANCH_COS = 0.0
# left-Jacobian coefficient (theta - sin theta) / theta^3 uses its series below this
_SERIES_ANGLE = 1e-2


class Pose(NamedTuple):
    """Homogeneous transform split into rotation ``R`` and translation ``r``."""

    R: np.ndarray
    r: np.ndarray

    def matrix(self) -> np.ndarray:
        R = np.asarray(self.R)
        T = np.zeros(R.shape[:-2] + (4, 4))
        T[..., :3, :3] = R
        T[..., :3, 3] = self.r
        T[..., 3, 3] = 1.0
        return T


def identity_pose(batch: tuple[int, ...] = ()) -> Pose:
    R = np.broadcast_to(np.eye(3), batch + (3, 3)).copy()
    return Pose(R, np.zeros(batch + (3,)))


def hat3(w) -> np.ndarray:
    """Skew matrix with ``hat3(w) @ y == cross(w, y)``."""
    w = np.asarray(w, dtype=float)
    W = np.zeros(w.shape[:-1] + (3, 3))
    W[..., 0, 1] = -w[..., 2]
    W[..., 0, 2] = w[..., 1]
    W[..., 1, 0] = w[..., 2]
    W[..., 1, 2] = -w[..., 0]
    W[..., 2, 0] = -w[..., 1]
    W[..., 2, 1] = w[..., 0]
    return W


def vee3(W) -> np.ndarray:
    """Inverse of :func:`hat3`, using the antisymmetric part of ``W``."""
    W = np.asarray(W, dtype=float)
    return 0.5 * np.stack(
        [W[..., 2, 1] - W[..., 1, 2],
         W[..., 0, 2] - W[..., 2, 0],
         W[..., 1, 0] - W[..., 0, 1]], axis=-1)


def hat6(xi) -> np.ndarray:
    """4x4 se(3) matrix of a twist ``(omega, v)``."""
    xi = np.asarray(xi, dtype=float)
    X = np.zeros(xi.shape[:-1] + (4, 4))
    X[..., :3, :3] = hat3(xi[..., :3])
    X[..., :3, 3] = xi[..., 3:]
    return X


def _so3_coeffs(theta):
    """Return sin(t)/t, (1-cos t)/t^2, (t - sin t)/t^3 without 0/0."""
    theta = np.asarray(theta, dtype=float)
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = t * t
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(t) / t)
    half = np.sin(0.5 * t)
    b = np.where(small, 0.5 - theta**2 / 24.0, 2.0 * half * half / t2)
    series = theta < _SERIES_ANGLE
    th2 = theta**2
    c_series = 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0 - th2**3 / 362880.0
    ts = np.where(series, 1.0, theta)
    c = np.where(series, c_series, (ts - np.sin(ts)) / ts**3)
    return a, b, c


def exp_so3(w) -> np.ndarray:
    """Rodrigues exponential of a rotation vector."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    a, b, _ = _so3_coeffs(theta)
    W = hat3(w)
    return (np.eye(3) + a[..., None, None] * W
            + b[..., None, None] * (W @ W))


def rotation_angle(R) -> np.ndarray:
    """Angle in [0, pi] of a rotation matrix, accurate near 0 and near pi."""
    R = np.asarray(R, dtype=float)
    s = np.linalg.norm(vee3(R), axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(s, c)


def log_so3(R) -> np.ndarray:
    """Rotation vector of ``R`` with norm in [0, pi].

    Past a quarter turn the axis is taken from the symmetric part of R
    (largest diagonal entry of n n^T), which stays accurate up to pi. The
    sign comes from the antisymmetric part; at exactly pi the axis is
    oriented so its largest-magnitude component is positive.
    """
    R = np.asarray(R, dtype=float)
    u = vee3(R)  # = sin(theta) * axis
    s = np.linalg.norm(u, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)

    small = theta < SMALL_ANGLE
    ts = np.where(small, 1.0, theta)
    scale = np.where(small, 1.0 + theta**2 / 6.0, ts / np.where(s > 0, s, 1.0))
    generic = u * scale[..., None]

    # axis from (R + R^T)/2 = cos I + (1 - cos) n n^T
    S = 0.5 * (R + np.swapaxes(R, -1, -2))
    denom = np.where(1.0 - c > 0.5, 1.0 - c, 1.0)
    nnT = (S - c[..., None, None] * np.eye(3)) / denom[..., None, None]
    diag = np.diagonal(nnT, axis1=-2, axis2=-1)
    k = np.argmax(diag, axis=-1)
    col = np.take_along_axis(nnT, k[..., None, None].repeat(3, axis=-2), axis=-1)[..., 0]
    norm = np.linalg.norm(col, axis=-1, keepdims=True)
    n = col / np.where(norm > 0, norm, 1.0)
    dot = np.sum(n * u, axis=-1)
    big = np.take_along_axis(n, np.argmax(np.abs(n), axis=-1)[..., None], axis=-1)[..., 0]
    sign = np.where(dot != 0.0, np.sign(dot), np.sign(big))
    near_pi = (theta * sign)[..., None] * n
    use_pi = c < _PI_BRANCH_COS
    return np.where(use_pi[..., None], near_pi, generic)


def left_jacobian_so3(w) -> np.ndarray:
    """V(w) with exp(hat6((w, v))) translation = V(w) @ v."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    _, b, c = _so3_coeffs(theta)
    W = hat3(w)
    return np.eye(3) + b[..., None, None] * W + c[..., None, None] * (W @ W)


def inv_left_jacobian_so3(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    small = theta < _SERIES_ANGLE
    t = np.where(small, 1.0, theta)
    # (1/t^2) (1 - (t/2) cot(t/2)); series 1/12 + t^2/720 + t^4/30240
    th2 = theta**2
    d_series = 1.0 / 12.0 + th2 / 720.0 + th2 * th2 / 30240.0
    d = np.where(small, d_series, (1.0 - 0.5 * t / np.tan(0.5 * t)) / (t * t))
    W = hat3(w)
    return np.eye(3) - 0.5 * W + d[..., None, None] * (W @ W)


def exp_se3(xi, dt: float = 1.0) -> Pose:
    """Closed-form exponential of ``hat6(xi) * dt``."""
    xi = np.asarray(xi, dtype=float) * dt
    w, v = xi[..., :3], xi[..., 3:]
    R = exp_so3(w)
    r = np.einsum("...ij,...j->...i", left_jacobian_so3(w), v)
    return Pose(R, r)


def log_se3(q: Pose) -> np.ndarray:
    """Twist ``(omega, v)`` with ``exp_se3(log_se3(q)) == q``."""
    w = log_so3(q.R)
    v = np.einsum("...ij,...j->...i", inv_left_jacobian_so3(w), q.r)
    return np.concatenate([w, v], axis=-1)


def pose_compose(a: Pose, b: Pose) -> Pose:
    R = np.asarray(a.R) @ np.asarray(b.R)
    r = np.einsum("...ij,...j->...i", a.R, b.r) + a.r
    return Pose(R, r)


def pose_inverse(a: Pose) -> Pose:
    Rt = np.swapaxes(np.asarray(a.R), -1, -2)
    return Pose(Rt, -np.einsum("...ij,...j->...i", Rt, a.r))


def rot_distance(R1, R2) -> np.ndarray:
    """Geodesic distance ``||log(R1^T R2)||`` in radians."""
    return rotation_angle(np.swapaxes(np.asarray(R1), -1, -2) @ np.asarray(R2))


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    c, s = np.cos(a), np.sin(a)
    R = np.zeros(a.shape + (3, 3))
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    R[..., 2, 2] = 1.0
    return R


def yaw_zyx(R) -> np.ndarray:
    """Yaw of the Z-Y-X Euler decomposition (undefined at |pitch| = pi/2)."""
    R = np.asarray(R)
    return np.arctan2(R[..., 1, 0], R[..., 0, 0])


def random_rotation(rng: np.random.Generator, size=None, max_angle: float = np.pi) -> np.ndarray:
    """Rotation with uniformly random axis and angle uniform in [0, max_angle]."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    axis = rng.normal(size=shape + (3,))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = rng.uniform(0.0, max_angle, size=shape)
    return exp_so3(axis * angle[..., None])


def orthonormality_error(R) -> np.ndarray:
    R = np.asarray(R)
    E = np.swapaxes(R, -1, -2) @ R - np.eye(3)
    return np.linalg.norm(E, axis=(-2, -1))
