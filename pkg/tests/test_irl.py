import math

import numpy as np
import pytest

from mfgpop import irl, rewardnet
from mfgpop.actorcritic import rollout
from mfgpop.core import jsd
from mfgpop.datagen import generate
from mfgpop.irl import (
    GCLConfig, GCLDiverged, IRLError, SampleBuffer, gcl_train, importance_weight, irl_loss, log_importance_weight,
    reward_histogram_jsd, trajectory_rewards,
)
from mfgpop.policy import PolicyParams, trajectory_log_density


@pytest.fixture(scope="module")
def small_days():
    return generate(d=5, n_states=6, m_train=8, m_test=3, theta_star=4.0, c=50.0, seed=1)


def _zero_params(d):
    return rewardnet.zeros_like(rewardnet.xavier_init(np.random.default_rng(0), d))


# ---- importance weights

def test_log_importance_weight_examples():
    assert math.exp(log_importance_weight([math.log(0.5)])) == pytest.approx(2.0)
    # identical snapshots collapse the mixture
    assert math.exp(log_importance_weight([math.log(0.2)] * 4)) == pytest.approx(5.0)
    # mixture of 0.5 and 0.25 -> 1 / 0.375
    assert math.exp(log_importance_weight([math.log(0.5), math.log(0.25)])) == pytest.approx(1 / 0.375)
    with pytest.raises(IRLError):
        log_importance_weight([])


def test_log_importance_weight_is_stable_for_huge_log_densities():
    v = log_importance_weight([5000.0, 5001.0])
    assert math.isfinite(v)
    assert v == pytest.approx(math.log(2) - (5001 + math.log1p(math.exp(-1))))


def test_importance_weight_modes(small_days):
    traj = small_days[0][0]
    snaps = [PolicyParams(4.0, 50.0), PolicyParams(1.0, 50.0)]
    assert importance_weight(traj, snaps, "unity") == 1.0
    lds = [trajectory_log_density(traj.states[:-1], traj.actions, p) for p in snaps]
    expect = 1.0 / np.mean(np.exp(lds))
    assert importance_weight(traj, snaps, "mis") == pytest.approx(expect, rel=1e-9)
    with pytest.raises(IRLError):
        importance_weight(traj, snaps, "other")


# ---- buffer

def test_sample_buffer_tracks_snapshots(small_days, rng):
    train, _ = small_days
    buf = SampleBuffer()
    with pytest.raises(IRLError):
        buf.add(train[:1], 0)
    k0 = buf.add_snapshot(PolicyParams(1.0, 50.0))
    buf.add(train[:2], k0)
    k1 = buf.add_snapshot(PolicyParams(3.0, 50.0))
    buf.add(train[2:3], k1)
    assert len(buf) == 3 and buf.source == [0, 0, 1]
    assert all(len(row) == 2 for row in buf.log_dens)
    assert np.all(np.isfinite(buf.log_dens))
    np.testing.assert_array_equal(buf.log_weights([0, 1, 2], "unity"), 0.0)
    lw = buf.log_weights([0], "mis")
    assert lw[0] == pytest.approx(log_importance_weight(buf.log_dens[0]))


# ---- loss

def test_loss_at_zero_network(small_days):
    train, _ = small_days
    W = _zero_params(5)
    loss, _ = irl_loss(W, train[:3], train[3:7])
    assert loss == 0.0
    log_z = np.log([1.0, 2.0, 3.0, 4.0])
    loss, _ = irl_loss(W, train[:3], train[3:7], log_z)
    assert loss == pytest.approx(math.log(2.5), abs=1e-14)


def test_loss_cancels_when_demo_equals_sample(small_days, rng):
    train, _ = small_days
    for _ in range(5):
        W = rewardnet.xavier_init(rng, 5)
        loss, grads = irl_loss(W, train[:1], train[:1])
        assert abs(loss) < 1e-12
        assert max(np.abs(g).max() for g in grads.values()) < 1e-12


def test_loss_gradient_matches_finite_differences(small_days, rng):
    train, _ = small_days
    W = rewardnet.xavier_init(rng, 5)
    # non-zero biases keep pre-activations off the ReLU kink at exactly zero
    for k in ("b1", "b2", "c1", "c2", "c3"):
        W[k] = rng.normal(0, 0.2, np.shape(W[k]))
    log_z = rng.normal(size=4)
    loss, grads = irl_loss(W, train[:3], train[3:7], log_z, l1=1e-3, l2=1e-3)
    names = rewardnet.PARAM_NAMES
    flat_g = np.concatenate([np.ravel(grads[n]) for n in names])
    x0 = np.concatenate([np.ravel(W[n]) for n in names])

    def unflat(x):
        out, i = {}, 0
        for n in names:
            m = np.size(W[n])
            out[n] = x[i:i + m].reshape(np.shape(W[n]))
            i += m
        return out

    h = 1e-6
    for _ in range(5):
        v = rng.normal(size=x0.size)
        fp, _ = irl_loss(unflat(x0 + h * v), train[:3], train[3:7], log_z, l1=1e-3, l2=1e-3)
        fm, _ = irl_loss(unflat(x0 - h * v), train[:3], train[3:7], log_z, l1=1e-3, l2=1e-3)
        fd = (fp - fm) / (2 * h)
        assert abs(fd - flat_g @ v) / max(abs(fd), 1e-8) < 1e-4


def test_loss_errors(small_days):
    train, _ = small_days
    W = _zero_params(5)
    with pytest.raises(IRLError):
        irl_loss(W, [], train[:2])
    with pytest.raises(IRLError):
        irl_loss(W, train[:2], train[:2], np.full(2, -np.inf))


def test_loss_finite_at_reward_bounds(small_days):
    train, _ = small_days
    W = _zero_params(5)
    W["c3"] = np.array([50.0])  # every pair at the tanh bound
    loss, grads = irl_loss(W, train[:2], train[2:6], np.array([-700.0, 0.0, 0.0, 700.0]))
    assert math.isfinite(loss)
    assert all(np.all(np.isfinite(g)) for g in grads.values())


def test_trajectory_rewards(small_days, rng):
    train, _ = small_days
    W = rewardnet.xavier_init(rng, 5)
    r = trajectory_rewards(train[:3], W)
    np.testing.assert_allclose(r, [rewardnet.trajectory_reward(t, W) for t in train[:3]], rtol=1e-12)


def test_reward_histogram_jsd():
    a = np.linspace(-0.9, 0.9, 100)
    assert reward_histogram_jsd(a, a) == 0.0
    assert reward_histogram_jsd(np.full(10, -0.99), np.full(10, 0.99)) == pytest.approx(math.log(2))


# ---- training loop

def test_zero_outer_iterations_returns_initial_state(small_days):
    train, _ = small_days
    cfg = GCLConfig(outer_iters=0, seed=5, theta_init=2.5, alpha_scale=50.0)
    W, policy, diag = gcl_train(train, cfg)
    init = rewardnet.xavier_init(np.random.default_rng(5), 5)
    for k in init:
        np.testing.assert_array_equal(W[k], init[k])
    assert policy == PolicyParams(2.5, 50.0) and diag == []


def test_gcl_small_run(small_days):
    train, _ = small_days
    seen = []
    cfg = GCLConfig(outer_iters=3, samples_per_iter=4, ac_episodes=30, max_inner=20, alpha_scale=50.0, seed=2)
    W, policy, diag = gcl_train(train, cfg, callback=seen.append)
    assert [r["iteration"] for r in diag] == [1, 2, 3]
    assert [r["buffer_size"] for r in diag] == [4, 8, 12]
    assert seen == diag
    assert all(1 <= r["inner_steps"] <= 20 for r in diag)
    assert all(math.isfinite(r["loss"]) and 0 <= r["reward_jsd"] <= math.log(2) + 1e-12 for r in diag)
    rewardnet.check_params(W, 5)


def test_gcl_mis_mode_runs(small_days):
    train, _ = small_days
    cfg = GCLConfig(outer_iters=2, samples_per_iter=3, ac_episodes=10, max_inner=5, alpha_scale=50.0,
                    weight_mode="mis", seed=3)
    _, _, diag = gcl_train(train, cfg)
    assert len(diag) == 2


def test_gcl_is_reproducible(small_days):
    train, _ = small_days
    cfg = GCLConfig(outer_iters=1, samples_per_iter=3, ac_episodes=20, max_inner=5, alpha_scale=50.0, seed=4)
    a = gcl_train(train, cfg)
    b = gcl_train(train, cfg)
    assert a[1] == b[1] and a[2] == b[2]


def test_gcl_config_and_input_errors(small_days):
    with pytest.raises(IRLError):
        GCLConfig(weight_mode="bogus")
    with pytest.raises(IRLError):
        gcl_train([], GCLConfig())


def test_gcl_non_finite_loss_keeps_last_good(small_days, monkeypatch):
    train, _ = small_days

    def bad_loss(*args, **kw):
        return float("nan"), {}

    monkeypatch.setattr(irl, "irl_loss", bad_loss)
    cfg = GCLConfig(outer_iters=1, samples_per_iter=2, ac_episodes=5, alpha_scale=50.0, seed=0)
    with pytest.raises(GCLDiverged) as info:
        gcl_train(train, cfg)
    assert info.value.last_good_policy == PolicyParams(cfg.theta_init, 50.0)
    rewardnet.check_params(info.value.last_good_reward, 5)


# ---- behaviour on the d=15 synthetic data (shares the runs with the acceptance suite)

def _mean_hourly_jsd(policy, days, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for t in days:
        g, _ = rollout(policy, t.states[0], t.n_states, None, rng)
        out.append(np.mean([jsd(a, b) for a, b in zip(g.states, t.states)]))
    return float(np.mean(out))


@pytest.mark.slow
def test_gcl_improves_on_initial_policy_by_factor_two(gcl_runs, synthetic_days):
    _, test = synthetic_days
    _, policy, _, _ = gcl_runs[0]
    before = _mean_hourly_jsd(PolicyParams(GCLConfig().theta_init, GCLConfig().alpha_scale), test)
    after = _mean_hourly_jsd(policy, test)
    print(f"mean hourly JSD: initial policy {before:.4g}, learned policy {after:.4g} (theta={policy.theta:.3f})")
    assert after * 2 <= before


@pytest.mark.slow
def test_reward_distribution_jsd_trends_down(gcl_runs):
    counts = []
    for seed, (_, _, diag, _) in gcl_runs.items():
        series = [r["reward_jsd"] for r in diag]
        counts.append(sum(b < a for a, b in zip(series, series[1:])))
        print(f"seed {seed}: reward-histogram JSD per iteration {np.round(series, 4).tolist()}")
    assert np.median(counts) >= 3
