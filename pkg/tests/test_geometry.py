import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symtrack.geometry import (
    Pose,
    exp_se3,
    exp_so3,
    hat3,
    hat6,
    identity_pose,
    log_se3,
    log_so3,
    orthonormality_error,
    pose_compose,
    pose_inverse,
    random_rotation,
    rot_distance,
    rot_z,
    vee3,
)

from .oracles import series_expm

vec3 = arrays(np.float64, 3, elements=st.floats(-3.0, 3.0))


def test_hat3_examples():
    assert np.array_equal(hat3(np.zeros(3)), np.zeros((3, 3)))
    assert np.array_equal(hat3([1.0, 0.0, 0.0]), [[0, 0, 0], [0, 0, -1], [0, 1, 0]])


@given(vec3, vec3)
def test_hat3_is_cross_product(w, y):
    W = hat3(w)
    assert np.allclose(W, -W.T)
    cross = np.array([w[1] * y[2] - w[2] * y[1], w[2] * y[0] - w[0] * y[2], w[0] * y[1] - w[1] * y[0]])
    assert np.allclose(W @ y, cross, atol=1e-14)
    assert np.array_equal(vee3(W), w)


def test_exp_so3_examples():
    assert np.array_equal(exp_so3(np.zeros(3)), np.eye(3))
    quarter = exp_so3([0.0, 0.0, np.pi / 2])
    assert np.allclose(quarter, series_expm(hat3([0.0, 0.0, np.pi / 2])), atol=1e-14)
    assert np.allclose(quarter, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    w = np.array([0.1, 0.2, 0.3])
    assert np.allclose(log_so3(exp_so3(w)), w, atol=1e-10)


def test_log_so3_examples():
    assert np.array_equal(log_so3(np.eye(3)), np.zeros(3))
    assert np.allclose(log_so3(rot_z(np.pi / 2)), [0, 0, np.pi / 2], atol=1e-15)


def test_exp_log_round_trip_bulk(rng):
    axis = rng.standard_normal((10_000, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    w = axis * rng.uniform(0, np.pi - 1e-6, (10_000, 1))
    R = exp_so3(w)
    small = np.linalg.norm(w, axis=1) < 3.0
    assert np.max(np.abs(log_so3(R[small]) - w[small])) < 1e-10
    # near pi the axis read-out loses digits, but the rotation must still come back
    assert np.max(np.abs(exp_so3(log_so3(R[~small])) - R[~small])) < 1e-10
    assert np.max(orthonormality_error(R)) < 1e-12
    assert np.max(np.abs(np.linalg.det(R) - 1)) < 1e-12


@pytest.mark.parametrize("angle", [0.0, 1e-12, 1e-9, 1e-8, 2e-8, 1e-4, 1e-2, 0.5, 2.0, np.pi - 1e-7,
                                   np.pi - 1e-9, np.pi])
def test_exp_so3_matches_series_across_branches(angle, rng):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    w = axis * angle
    assert np.allclose(exp_so3(w), series_expm(hat3(w), 40), atol=1e-14)


@pytest.mark.parametrize("eps", [0.0, 1e-12, 1e-9, 1e-7, 1e-6])
def test_log_so3_near_pi_reproduces_rotation(eps, rng):
    for _ in range(20):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        R = exp_so3(axis * (np.pi - eps))
        w = log_so3(R)
        assert np.all(np.isfinite(w))
        assert np.linalg.norm(w) <= np.pi + 1e-12
        assert np.linalg.norm(exp_so3(w) - R) < 1e-9


def test_exp_se3_examples():
    q = exp_se3(np.zeros(6))
    assert np.array_equal(q.R, np.eye(3)) and np.array_equal(q.r, np.zeros(3))
    q = exp_se3([0, 0, 0, 1, 0, 0], 0.5)
    assert np.allclose(q.r, [0.5, 0, 0]) and np.array_equal(q.R, np.eye(3))


def test_exp_se3_matches_matrix_series(rng):
    for _ in range(200):
        xi = rng.normal(0, 1.5, 6)
        dt = rng.uniform(0.01, 1.0)
        q = exp_se3(xi, dt)
        ref = series_expm(hat6(xi) * dt, 40)
        assert np.allclose(q.matrix(), ref, atol=1e-10)


def test_exp_se3_small_angle_branch(rng):
    for scale in [0.0, 1e-10, 1e-6, 1e-3, 5e-3, 2e-2]:
        xi = np.concatenate([rng.standard_normal(3) * scale, rng.standard_normal(3)])
        assert np.allclose(exp_se3(xi).matrix(), series_expm(hat6(xi), 40), atol=1e-14)


def test_log_se3_round_trip(rng):
    xi = rng.normal(0, 0.8, (500, 6))
    xi = xi[np.linalg.norm(xi[:, :3], axis=1) < 3.0]  # principal branch only
    assert np.allclose(log_se3(exp_se3(xi)), xi, atol=1e-10)


def _random_poses(rng, n):
    return Pose(random_rotation(rng, n), rng.normal(0, 2, (n, 3)))


def test_group_axioms_bulk(rng):
    a, b, c = (_random_poses(rng, 10_000) for _ in range(3))
    lhs = pose_compose(pose_compose(a, b), c)
    rhs = pose_compose(a, pose_compose(b, c))
    assert np.max(np.abs(lhs.R - rhs.R)) < 1e-12 and np.max(np.abs(lhs.r - rhs.r)) < 1e-12
    ident = identity_pose((10_000,))
    for e in (pose_compose(a, pose_inverse(a)), pose_compose(pose_inverse(a), a)):
        assert np.max(np.abs(e.R - ident.R)) < 1e-12 and np.max(np.abs(e.r)) < 1e-12
    same = pose_compose(a, ident)
    assert np.array_equal(same.R, a.R) and np.array_equal(same.r, a.r)
    assert np.max(orthonormality_error(lhs.R)) < 1e-12


def test_rot_distance(rng):
    R = random_rotation(rng)
    assert rot_distance(R, R) < 1e-7
    assert np.isclose(rot_distance(np.eye(3), rot_z(np.pi / 2)), np.pi / 2, atol=1e-15)
    R1, R2, Q = (random_rotation(rng, 1000) for _ in range(3))
    d = rot_distance(R1, R2)
    assert np.allclose(d, rot_distance(R2, R1), atol=1e-12)
    assert np.max(np.abs(rot_distance(Q @ R1, Q @ R2) - d)) < 1e-10
    assert np.all(d >= 0) and np.all(d <= np.pi + 1e-12)
