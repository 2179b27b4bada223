import numpy as np
import pytest

from symtrack.dynamics import (
    ParticleParams,
    ParticleState,
    QuadrotorParams,
    RigidParams,
    RigidState,
    particle_step,
    quad_mix,
    quad_step,
    quad_unmix,
    rigid_step,
)
from symtrack.geometry import Pose, exp_so3, pose_compose, random_rotation, rot_x, rot_z

ASTRO = RigidParams(9.58, [0.153, 0.143, 0.162], 0.02)
QUAD = QuadrotorParams(RigidParams(0.5, [2.3e-3, 2.3e-3, 4e-3], 0.02), 0.17, 0.016, 9.81)


def _rigid_state(rng, n=None):
    shape = () if n is None else (n,)
    return RigidState(random_rotation(rng, n), rng.normal(0, 1, shape + (3,)),
                      rng.normal(0, 1, shape + (3,)), rng.normal(0, 1, shape + (3,)))


def test_particle_examples():
    p = ParticleParams(1.0, 0.1)
    x = ParticleState(np.array([1.0, 2.0, 3.0]), np.zeros(3))
    y = particle_step(x, np.zeros(3), p)
    assert np.array_equal(y.r, x.r) and np.array_equal(y.v, x.v)
    y = particle_step(ParticleState(np.zeros(3), np.array([1.0, 2.0, 3.0])), np.zeros(3), p)
    assert np.allclose(y.r, [0.1, 0.2, 0.3], atol=1e-15) and np.array_equal(y.v, [1, 2, 3])
    y = particle_step(ParticleState(np.zeros(3), np.zeros(3)), [2.0, 0, 0], ParticleParams(2.0, 0.5))
    assert np.allclose(y.v, [0.5, 0, 0], atol=1e-15)


def test_particle_symmetry(rng):
    p = ParticleParams(1.7, 0.02)
    r, v, u, k1, k2, h = rng.normal(0, 2, (6, 500, 3))
    base = particle_step(ParticleState(r, v), u, p)
    moved = particle_step(ParticleState(r + k1, v + k2), u + h, p)
    assert np.max(np.abs(moved.r - (base.r + k1 + k2 * p.dt))) < 1e-12
    assert np.max(np.abs(moved.v - (base.v + k2 + h / p.m * p.dt))) < 1e-12


def test_params_validation():
    with pytest.raises(ValueError):
        ParticleParams(0.0, 0.02)
    with pytest.raises(ValueError):
        ParticleParams(1.0, -0.02)
    with pytest.raises(ValueError):
        RigidParams(1.0, [1.0, -1.0, 1.0], 0.02)
    with pytest.raises(ValueError):
        RigidParams(1.0, [[1.0, 0.5, 0], [0, 1, 0], [0, 0, 1]], 0.02)
    with pytest.raises(ValueError):
        QuadrotorParams(ASTRO, 0.0, 0.016, 9.81)


def test_rigid_fixed_point(rng):
    x = RigidState(random_rotation(rng), rng.normal(size=3), np.zeros(3), np.zeros(3))
    y = rigid_step(x, np.zeros(6), ASTRO)
    for a, b in zip(x, y):
        assert np.array_equal(a, b)


def test_rigid_gyroscopic_examples():
    x = RigidState(np.eye(3), np.zeros(3), np.array([1.0, 1.0, 0.0]), np.zeros(3))
    y = rigid_step(x, np.zeros(6), RigidParams(1.0, [1, 1, 1], 0.1))
    assert np.array_equal(y.w, x.w)
    y = rigid_step(x, np.zeros(6), RigidParams(1.0, [1, 2, 3], 0.1))
    # w x Jw = (0, 0, 1), so dw = -J^-1 (0,0,1) dt
    assert np.allclose(y.w, [1, 1, -1 / 30], atol=1e-15)


def test_rigid_pose_update_is_lie_euler():
    x = RigidState(np.eye(3), np.zeros(3), np.array([0, 0, np.pi / 2]), np.zeros(3))
    y = rigid_step(x, np.zeros(6), RigidParams(1.0, [1, 1, 1], 1.0))
    assert np.allclose(y.R, rot_z(np.pi / 2), atol=1e-15)
    x = RigidState(rot_z(np.pi / 2), np.zeros(3), np.zeros(3), np.array([1.0, 0, 0]))
    y = rigid_step(x, [0, 0, 0, 9.58, 0, 0], ASTRO)
    # body-frame velocity (1,0,0) moves along world y when yawed by 90 deg
    assert np.allclose(y.r, [0, 0.02, 0], atol=1e-15)
    assert np.allclose(y.v, [1.02, 0, 0], atol=1e-15)


def test_rigid_se3_equivariance(rng):
    x = _rigid_state(rng, 1000)
    u = rng.normal(0, 1, (1000, 6))
    k = Pose(random_rotation(rng, 1000), rng.normal(0, 3, (1000, 3)))
    y = rigid_step(x, u, ASTRO)
    kq = pose_compose(k, x.pose)
    z = rigid_step(RigidState(kq.R, kq.r, x.w, x.v), u, ASTRO)
    ky = pose_compose(k, y.pose)
    assert np.max(np.abs(z.R - ky.R)) < 1e-12 and np.max(np.abs(z.r - ky.r)) < 1e-12
    assert np.array_equal(z.w, y.w) and np.array_equal(z.v, y.v)


def test_quad_mix_examples():
    p = QuadrotorParams(ASTRO, 0.1, 0.01, 9.81)
    assert np.allclose(quad_mix([1.0, 0, 0, 0], p), [0.1, 0, 0.01, 0, 0, 1], atol=1e-16)
    w = quad_mix(np.full(4, 0.7), p)
    assert np.array_equal(w[:3], np.zeros(3)) and np.isclose(w[5], 2.8)
    w = quad_mix(np.full(4, QUAD.hover_thrust), QUAD)
    assert np.isclose(w[5], QUAD.m * QUAD.g, rtol=1e-15)
    assert np.array_equal(w[3:5], [0, 0])


def test_quad_unmix_inverts_mix(rng):
    u = rng.normal(1, 0.5, (200, 4))
    w = quad_mix(u, QUAD)
    assert np.allclose(quad_unmix(w[:, 5], w[:, :3], QUAD), u, atol=1e-12)


def test_quad_examples():
    x = RigidState(np.eye(3), np.zeros(3), np.zeros(3), np.zeros(3))
    y = quad_step(x, np.full(4, QUAD.hover_thrust), QUAD)
    for a, b in zip(x, y):
        assert np.allclose(a, b, atol=1e-15)
    p = QuadrotorParams(RigidParams(0.5, [2.3e-3, 2.3e-3, 4e-3], 0.1), 0.17, 0.016, 9.81)
    y = quad_step(x, np.zeros(4), p)
    assert np.allclose(y.v, [0, 0, -0.981], atol=1e-15)
    y = quad_step(x._replace(R=rot_x(np.pi)), np.zeros(4), p)
    assert np.allclose(y.v, [0, 0, 0.981], atol=1e-15)


def test_quad_thrusts_not_clamped():
    x = RigidState(np.eye(3), np.zeros(3), np.zeros(3), np.zeros(3))
    y = quad_step(x, np.full(4, -1.0), QUAD)
    assert y.v[2] < -QUAD.g * QUAD.dt


def test_quad_planar_equivariance(rng):
    n = 1000
    x = _rigid_state(rng, n)
    u = rng.normal(1.2, 0.3, (n, 4))
    k = Pose(rot_z(rng.uniform(-np.pi, np.pi, n)), rng.normal(0, 3, (n, 3)))
    y = quad_step(x, u, QUAD)
    kq = pose_compose(k, x.pose)
    z = quad_step(RigidState(kq.R, kq.r, x.w, x.v), u, QUAD)
    ky = pose_compose(k, y.pose)
    assert np.max(np.abs(z.R - ky.R)) < 1e-12 and np.max(np.abs(z.r - ky.r)) < 1e-12
    assert np.max(np.abs(z.v - y.v)) < 1e-12 and np.array_equal(z.w, y.w)


def test_quad_tilt_breaks_equivariance(rng):
    x = _rigid_state(rng, 100)
    u = np.full((100, 4), QUAD.hover_thrust)
    k = Pose(exp_so3(np.tile([0.3, 0.0, 0.0], (100, 1))), np.zeros((100, 3)))
    y = quad_step(x, u, QUAD)
    kq = pose_compose(k, x.pose)
    z = quad_step(RigidState(kq.R, kq.r, x.w, x.v), u, QUAD)
    assert np.max(np.abs(z.v - y.v)) > 1e-3


def test_batched_matches_single(rng):
    x = _rigid_state(rng, 8)
    u = rng.normal(1.2, 0.3, (8, 4))
    y = quad_step(x, u, QUAD)
    for i in range(8):
        yi = quad_step(RigidState(*[f[i] for f in x]), u[i], QUAD)
        for a, b in zip(yi, y):
            assert np.allclose(a, b[i], atol=1e-15)


def test_flat_round_trip(rng):
    x = _rigid_state(rng, 5)
    y = RigidState.from_flat(x.flat())
    for a, b in zip(x, y):
        assert np.array_equal(a, b)
    p = ParticleState(rng.normal(size=3), rng.normal(size=3))
    assert np.array_equal(ParticleState.from_flat(p.flat()).v, p.v)
