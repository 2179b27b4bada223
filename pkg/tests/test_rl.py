import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symtrack.dynamics import ParticleParams
from symtrack.rl import (
    PpoConfig,
    TrajectoryBatch,
    adam_init,
    adam_step,
    auc,
    gae,
    init_actor_critic,
    init_mlp,
    mlp_backward,
    mlp_forward,
    normalize_advantages,
    policy_entropy,
    policy_log_prob,
    policy_sample,
    ppo_loss_and_grads,
    ppo_update,
    train,
)
from symtrack.rl.mlp import mlp_input_grad, orthogonal
from symtrack.rl.normalize import ObsNormalizer, RewardScaler, RunningMeanStd
from symtrack.rl.optim import clip_by_global_norm
from symtrack.symmetry import ReductionKind
from symtrack.tracking_mdp import EnvConfig, ParticleSystem, RefActionDist

from .oracles import fd_case, gae_direct, ppo_fd_case

LOG2PI = np.log(2 * np.pi)


# ---------------------------------------------------------------- mlp

def test_mlp_zero_params():
    params = {k: np.zeros_like(v) for k, v in init_mlp([3, 8, 8, 2], np.random.default_rng(0)).items()}
    out, _ = mlp_forward(params, np.ones((4, 3)))
    assert np.array_equal(out, np.zeros((4, 2)))
    _, cache = mlp_forward(params, np.ones((4, 3)))
    grads = mlp_backward(params, cache, np.zeros((4, 2)))
    assert all(not np.any(g) for g in grads.values())


def test_mlp_single_linear_layer(rng):
    W, b = rng.normal(size=(4, 3)), rng.normal(size=3)
    x = rng.normal(size=(5, 4))
    out, cache = mlp_forward({"W0": W, "b0": b}, x)
    assert np.allclose(out, x @ W + b, atol=1e-14)
    # gradient of 1/2 |xW + b - y|^2 is x^T (xW + b - y)
    y = rng.normal(size=(5, 3))
    grads = mlp_backward({"W0": W, "b0": b}, cache, out - y)
    assert np.allclose(grads["W0"], x.T @ (out - y), atol=1e-13)
    assert np.allclose(grads["b0"], (out - y).sum(0), atol=1e-13)


def test_mlp_hidden_saturates(rng):
    params = init_mlp([2, 5, 1], rng)
    _, cache = mlp_forward(params, np.full((1, 2), 1e6))
    assert np.all(np.abs(cache[1]) <= 1.0)


def test_orthogonal_init(rng):
    W = orthogonal(rng, 6, 4, 2.0)
    assert np.allclose(W.T @ W, 4.0 * np.eye(4), atol=1e-12)
    W = orthogonal(rng, 3, 7, 1.0)
    assert np.allclose(W @ W.T, np.eye(3), atol=1e-12)


def test_mlp_input_width_mismatch():
    with pytest.raises(ValueError):
        mlp_forward(init_mlp([3, 4, 1], np.random.default_rng(0)), np.ones(2))


def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(2024)
    assert max(fd_case(rng) for _ in range(30)) <= 1e-4


def test_mlp_input_grad(rng):
    params = init_mlp([3, 6, 2], rng)
    x = rng.normal(size=(1, 3))
    c = rng.normal(size=(1, 2))
    _, cache = mlp_forward(params, x)
    g = mlp_input_grad(params, cache, c)
    h = 1e-6
    for j in range(3):
        e = np.zeros_like(x)
        e[0, j] = h
        fd = (np.sum(c * mlp_forward(params, x + e)[0]) - np.sum(c * mlp_forward(params, x - e)[0])) / (2 * h)
        assert abs(fd - g[0, j]) < 1e-8


def test_ppo_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    assert max(ppo_fd_case(rng) for _ in range(10)) <= 1e-4


# ---------------------------------------------------------------- distributions

def test_log_prob_examples():
    log_std = np.log([0.5, 2.0])
    assert np.isclose(policy_log_prob(np.zeros(2), log_std, np.zeros(2)), -log_std.sum() - LOG2PI)
    assert np.isclose(policy_log_prob(np.zeros(1), np.zeros(1), np.ones(1)), -0.5 - 0.5 * LOG2PI)


def test_entropy_monte_carlo():
    rng = np.random.default_rng(1)
    log_std = np.array([-1.0, 0.3, 0.7])
    mean = np.array([0.5, -1.0, 2.0])
    _, lp = policy_sample(np.broadcast_to(mean, (100_000, 3)), log_std, rng)
    assert abs(-lp.mean() - policy_entropy(log_std)) < 3 * lp.std() / np.sqrt(len(lp))


# ---------------------------------------------------------------- gae

def test_gae_single_step():
    adv, ret = gae([[1.0]], [[0.5], [2.0]], [[False]], [[0.0]], 0.9, 0.95)
    assert np.isclose(adv[0, 0], 1.0 + 0.9 * 2.0 - 0.5) and np.isclose(ret[0, 0], adv[0, 0] + 0.5)


def test_gae_lambda_zero_is_td(rng):
    r, v = rng.normal(size=10), rng.normal(size=11)
    adv, _ = gae(r, v, np.zeros(10, bool), np.zeros(10), 0.97, 0.0)
    assert np.array_equal(adv, r + 0.97 * v[1:] - v[:-1])


@given(st.integers(0, 2**31 - 1), st.floats(0.5, 0.999), st.floats(0.0, 1.0))
def test_gae_direct_sum(seed, gamma, lam):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=10), rng.normal(size=11)
    adv, ret = gae(r, v, np.zeros(10, bool), np.zeros(10), gamma, lam)
    assert np.allclose(adv, gae_direct(r, v, gamma, lam), atol=1e-12)
    assert np.allclose(ret, adv + v[:-1], atol=1e-15)


def test_gae_truncation_bootstraps(rng):
    r, v = rng.normal(size=8), rng.normal(size=9)
    trunc = np.zeros(8, bool)
    trunc[3] = True
    boot = np.zeros(8)
    boot[3] = 4.2
    adv, _ = gae(r, v, trunc, boot, 0.9, 0.8)
    v_first = np.concatenate([v[:4], [4.2]])
    assert np.allclose(adv[:4], gae_direct(r[:4], v_first, 0.9, 0.8), atol=1e-12)
    assert np.allclose(adv[4:], gae_direct(r[4:], v[4:], 0.9, 0.8), atol=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(2, 500))
def test_normalize_advantages(seed, n):
    rng = np.random.default_rng(seed)
    adv = rng.normal(rng.uniform(-100, 100), rng.uniform(0.1, 100), n)
    out = normalize_advantages(adv, eps=0.0)
    assert abs(out.mean()) < 1e-10 and abs(out.std() - 1.0) < 1e-10


# ---------------------------------------------------------------- optimizers and statistics

def test_adam_first_step_oracle():
    params = {"w": np.array([1.0, -2.0])}
    g = {"w": np.array([0.3, -4.0])}
    new, st_ = adam_step(params, g, adam_init(params, eps=0.0), 0.1)
    # bias-corrected first step moves each coordinate by lr * sign(g)
    assert np.allclose(new["w"], [0.9, -1.9], atol=1e-15) and st_.step == 1
    assert np.array_equal(params["w"], [1.0, -2.0])


def test_adam_matches_reference_recursion(rng):
    p = {"w": rng.normal(size=3)}
    state = adam_init(p)
    m = v = np.zeros(3)
    w = p["w"].copy()
    for t in range(1, 6):
        g = rng.normal(size=3)
        p, state = adam_step(p, {"w": g}, state, 0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-5)
    assert np.allclose(p["w"], w, atol=1e-15)


def test_clip_by_global_norm():
    g = {"a": np.array([3.0, 0.0]), "b": np.array([4.0]), "c": np.array([100.0])}
    out, norm = clip_by_global_norm(g, 1.0, ["a", "b"])
    assert norm == 5.0 and np.allclose(out["a"], [0.6, 0]) and np.allclose(out["b"], [0.8])
    assert out["c"] is g["c"]


def test_running_mean_std_matches_batch(rng):
    data = rng.normal(2.0, 3.0, (1000, 4))
    rms = RunningMeanStd((4,), eps=0.0)
    for chunk in np.array_split(data, 7):
        rms.update(chunk)
    assert np.allclose(rms.mean, data.mean(0), atol=1e-12) and np.allclose(rms.var, data.var(0), atol=1e-10)
    assert np.array_equal(RunningMeanStd.from_state(rms.state()).mean, rms.mean)


def test_obs_normalizer_clips(rng):
    norm = ObsNormalizer(2)
    norm.update(rng.normal(0, 1, (100, 2)))
    assert np.all(np.abs(norm(np.array([1e6, -1e6]))) == 10.0)


def test_reward_scaler_shape_and_reset():
    sc = RewardScaler(3, 0.9)
    out = sc(np.array([1.0, 2.0, 3.0]), np.array([False, True, False]))
    assert out.shape == (3,) and sc.ret[1] == 0.0


# ---------------------------------------------------------------- ppo

def _batch(rng, n=64, n_obs=3, n_act=1):
    obs = rng.normal(size=(n, n_obs))
    acts = rng.normal(size=(n, n_act))
    return obs, acts


def test_ppo_identical_params_surrogate_zero(rng):
    cfg = PpoConfig(hidden=8)
    params = init_actor_critic(3, 2, rng, 8, -0.5)
    obs, acts = _batch(rng, n_act=2)
    from symtrack.rl.ppo import policy_mean
    logp = policy_log_prob(policy_mean(params, obs), params["log_std"], acts)
    adv = normalize_advantages(rng.normal(size=64))
    mb = TrajectoryBatch(obs, acts, logp, np.zeros(64), adv, np.zeros(64))
    _, _, stats = ppo_loss_and_grads(params, mb, cfg)
    assert abs(stats["policy_loss"]) < 1e-12
    assert stats["clip_fraction"] == 0.0 and abs(stats["approx_kl"]) < 1e-15


def test_ppo_vanilla_policy_gradient_oracle(rng):
    # one parameter that matters: the output bias of a 1-D Gaussian policy whose
    # hidden weights are zero, so mean = b and the PG is -mean(A (a - b)) / sigma^2
    cfg = PpoConfig(clip_eps=1e12, vf_coef=0.0, ent_coef=0.0, epochs=1, minibatches=1,
                    max_grad_norm=0.0, lr=0.05, hidden=4)
    params = init_actor_critic(2, 1, rng, 4, np.log(0.7))
    params = {k: (np.zeros_like(v) if k.startswith("pi/") else v) for k, v in params.items()}
    params["pi/b2"] = np.array([0.3])
    obs = rng.normal(size=(50, 2))
    acts = 0.3 + 0.7 * rng.normal(size=(50, 1))
    adv = rng.normal(size=50)
    logp = policy_log_prob(np.full((50, 1), 0.3), params["log_std"], acts)
    mb = TrajectoryBatch(obs, acts, logp, np.zeros(50), adv, np.zeros(50))
    _, grads, _ = ppo_loss_and_grads(params, mb, cfg)
    g_b = -np.mean(adv * (acts[:, 0] - 0.3)) / 0.49
    g_s = -np.mean(adv * ((acts[:, 0] - 0.3) ** 2 / 0.49 - 1.0))
    assert np.isclose(grads["pi/b2"][0], g_b, rtol=1e-12)
    assert np.isclose(grads["log_std"][0], g_s, rtol=1e-12)
    new, _, stats = ppo_update(params, mb, cfg, adam_init(params), rng)
    # first Adam step: each parameter moves by lr * g / (|g| + eps)
    assert np.isclose(new["pi/b2"][0], 0.3 - 0.05 * g_b / (abs(g_b) + 1e-5), rtol=1e-12)
    assert np.isclose(new["log_std"][0], np.log(0.7) - 0.05 * g_s / (abs(g_s) + 1e-5), rtol=1e-12)
    assert 0.0 <= stats["clip_fraction"] <= 1.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_ppo_update_aborts_on_nan(rng):
    cfg = PpoConfig(hidden=4, epochs=1, minibatches=2)
    params = init_actor_critic(2, 1, rng, 4)
    obs, acts = _batch(rng, n=8, n_obs=2)
    mb = TrajectoryBatch(obs, acts, np.zeros(8), np.zeros(8), np.ones(8), np.full(8, np.inf))
    new, _, stats = ppo_update(params, mb, cfg, adam_init(params), rng)
    assert stats["aborted"] and new is params


def test_ppo_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(clip_eps=0.0)
    with pytest.raises(ValueError):
        PpoConfig(gae_lambda=1.5)
    with pytest.raises(ValueError):
        PpoConfig(num_envs=0)


# ---------------------------------------------------------------- training

SYSTEM = ParticleSystem(ParticleParams(1.0, 0.02))
ENV = EnvConfig(RefActionDist(np.zeros(3), np.ones(3)))


def test_train_smoke_and_log_lengths():
    cfg = PpoConfig(num_envs=2, rollout_length=4, total_steps=24, minibatches=2, epochs=2, hidden=8)
    res = train(SYSTEM, ENV, ReductionKind.PARTICLE_FULL, cfg, seed=0)
    assert len(res.log) == 3 and res.log[-1]["global_step"] == 24
    assert not res.stopped_early


def test_train_is_bitwise_deterministic_across_threads():
    cfg = PpoConfig(num_envs=4, rollout_length=16, total_steps=192, minibatches=4, epochs=2, hidden=8)
    a = train(SYSTEM, ENV, ReductionKind.PARTICLE_TRANSLATION, cfg, seed=3, threads=1)
    b = train(SYSTEM, ENV, ReductionKind.PARTICLE_TRANSLATION, cfg, seed=3, threads=3)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert [r["mean_reward"] for r in a.log] == [r["mean_reward"] for r in b.log]
    c = train(SYSTEM, ENV, ReductionKind.PARTICLE_TRANSLATION, cfg, seed=4, threads=1)
    assert not np.array_equal(a.params["pi/W0"], c.params["pi/W0"])


def test_train_rejects_incompatible_reduction():
    with pytest.raises(ValueError):
        train(SYSTEM, ENV, ReductionKind.RIGID_SE3, PpoConfig(total_steps=8))


@pytest.mark.slow
def test_training_improves_reward():
    from symtrack.config import load_config
    cfg = load_config(env="particle", overrides={"run.reduction": "full", "ppo.total_steps": 300_000})
    res = train(cfg.system, cfg.env_cfg, cfg.reduction, cfg.ppo, seed=0, transform=cfg.transform)
    assert np.mean([r["mean_reward"] for r in res.log[-3:]]) > res.log[0]["mean_reward"]


def test_auc():
    rows = [{"global_step": 10, "mean_reward": 0.0}, {"global_step": 20, "mean_reward": 1.0},
            {"global_step": 30, "mean_reward": 1.0}]
    assert auc(rows) == pytest.approx(0.75)
    assert auc(rows[:1]) == 0.0
