"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line (also repeated in the terminal
summary) and then asserts on the same condition, so a failing criterion shows
up both in the summary and as a test failure.
"""

import time

import numpy as np
import pytest

from mfgpop import baselines, critic, oracle, rewardnet
from mfgpop.actorcritic import Schedules, initial_value_weights, rollout, train
from mfgpop.core import forward_step, jsd
from mfgpop.datagen import InitialSampler, as_step_reward, synth_reward
from mfgpop.policy import PolicyParams, alpha, grad_log_theta, policy_log_density, sample

from conftest import GCL_OUTER_ITERS, GCL_SEEDS

POP = synth_reward("popularity")
THETA_STAR = 8.64


def test_c1_simplex_conservation(rng, acceptance):
    d = 15
    pis = rng.dirichlet(np.ones(d), size=1000)
    Ps = rng.dirichlet(np.ones(d), size=(1000, d))
    worst = 0.0
    t0 = time.perf_counter()
    for k in range(100_000):
        out = forward_step(pis[k % 1000], Ps[(k * 7) % 1000])
        worst = max(worst, abs(out.sum() - 1.0))
    secs = time.perf_counter() - t0
    ok = acceptance(1, "simplex conservation", worst < 1e-12 and secs < 5,
                    f"max |sum-1| = {worst:.2e} over 1e5 calls, {secs:.2f}s")
    assert ok


def test_c2_interchange_identity(rng, acceptance):
    grid = oracle.SimplexGrid(3, 4)
    bad = 0
    t0 = time.perf_counter()
    for _ in range(100):
        pi = rng.dirichlet(np.ones(3))
        V = rng.normal(size=3)
        lhs, rhs = oracle.interchange_identity_check(pi, V, POP, grid, exact=True)
        bad += lhs != rhs
    secs = time.perf_counter() - t0
    ok = acceptance(2, "interchange identity", bad == 0 and secs < 120,
                    f"{bad} of 100 exact-rational instances differ, {secs:.1f}s")
    assert ok


def test_c3_mfg_mdp_equivalence(rng, acceptance):
    grid = oracle.SimplexGrid(2, 10)
    t0 = time.perf_counter()
    gaps, nash = [], []
    for pi0 in [np.array([0.2, 0.8]), np.array([0.5, 0.5])] + list(rng.dirichlet(np.ones(2), size=3)):
        value, acts = oracle.brute_force_mdp(pi0, POP, 2, grid)
        V = oracle.backward_hjb(oracle.induced_states(pi0, acts), POP, grid)
        gaps.append(abs(value - float(pi0 @ V[0])))
        nash.append(oracle.verify_nash_maximizer(acts[0], pi0, V[1], POP, grid))
    secs = time.perf_counter() - t0
    ok = acceptance(3, "MFG/MDP equivalence", max(gaps) <= 1e-10 and all(nash) and secs < 60,
                    f"max value gap {max(gaps):.1e} over {len(gaps)} starts, Nash check {sum(nash)}/{len(nash)}, "
                    f"{secs:.1f}s")
    assert ok


def _rewardnet_fd_error(rng):
    d = int(rng.integers(2, 7))
    B = int(rng.integers(1, 5))
    params = rewardnet.xavier_init(rng, d)
    for k in ("b1", "b2", "c1", "c2", "c3"):
        params[k] = rng.normal(0, 0.1, np.shape(params[k]))
    pi = rng.dirichlet(np.ones(d), size=B)
    P = rng.dirichlet(np.ones(d), size=(B, d))
    up = rng.normal(size=B)
    grads = rewardnet.backward(rewardnet.forward_cache(pi, P, params), params, up)
    v = {k: rng.normal(size=np.shape(p)) for k, p in params.items()}
    h = 1e-6

    def f(sign):
        shifted = {k: params[k] + sign * h * v[k] for k in params}
        return float(up @ rewardnet.forward(pi, P, shifted))

    fd = (f(1) - f(-1)) / (2 * h)
    an = sum(float(np.sum(grads[k] * v[k])) for k in params)
    return abs(fd - an) / max(abs(fd), abs(an), 1e-8)


def _policy_fd_error(rng):
    d = int(rng.integers(2, 7))
    pi = rng.dirichlet(np.ones(d))
    params = PolicyParams(rng.uniform(-10, 10), 10 ** rng.uniform(0, 4))
    P = sample(alpha(pi, params), rng)
    h = 1e-5
    fd = (policy_log_density(P, pi, PolicyParams(params.theta + h, params.c))
          - policy_log_density(P, pi, PolicyParams(params.theta - h, params.c))) / (2 * h)
    an = grad_log_theta(P, pi, params)
    return abs(fd - an) / max(abs(fd), abs(an), 1e-6)


def test_c4_gradient_fidelity(rng, acceptance):
    t0 = time.perf_counter()
    pol = max(_policy_fd_error(rng) for _ in range(100))
    net = max(_rewardnet_fd_error(rng) for _ in range(100))
    secs = time.perf_counter() - t0
    ok = acceptance(4, "gradient fidelity", pol < 1e-4 and net < 1e-4 and secs < 120,
                    f"max rel err: Dirichlet theta-gradient {pol:.1e}, reward network {net:.1e}, {secs:.1f}s")
    assert ok


# Actor-critic setting for criterion 5 (d=3, two states, one action per episode).
# The step sizes were pinned on seeds 100-104 before evaluating seeds 0-4 here.
AC_STARTS_SEED = 0
AC_N_STARTS = 21
AC_SCHEDULES = Schedules(beta0=100.0, xi0=0.3)
AC_CRITIC_WARMUP = 20
AC_EPISODES = 4000
AC_SEEDS = (0, 1, 2, 3, 4)


@pytest.mark.slow
def test_c5_actor_critic_optimality_gap(acceptance):
    reward = as_step_reward(POP)
    starts = InitialSampler(3)(np.random.default_rng(AC_STARTS_SEED), AC_N_STARTS)
    grid = oracle.SimplexGrid(3, 20)
    optimum = float(np.mean([oracle.brute_force_mdp(p, POP, 1, grid)[0] for p in starts]))
    t0 = time.perf_counter()
    ratios, thetas = [], []
    for seed in AC_SEEDS:
        rng = np.random.default_rng(seed)
        params = PolicyParams(1.0, 1e4)
        w = initial_value_weights(params, starts, 2, reward, rng, AC_CRITIC_WARMUP)
        params, _, ret = train(params, w, starts, 2, reward, AC_EPISODES, rng, AC_SCHEDULES)
        ratios.append(ret[-200:].mean() / optimum)
        thetas.append(params.theta)
    secs = time.perf_counter() - t0
    med = float(np.median(ratios))
    ok = acceptance(5, "actor-critic optimality gap", med >= 0.95 and secs < 300,
                    f"median last-200 return / optimum = {med:.3f} (per seed {np.round(ratios, 3).tolist()}, "
                    f"final theta {np.round(thetas, 2).tolist()}), optimum {optimum:.4f}, {secs:.0f}s")
    assert ok


def _rollout_hourly_jsd(policy, days, seed=0):
    rng = np.random.default_rng(seed)
    per_day = []
    for t in days:
        g, _ = rollout(policy, t.states[0], t.n_states, None, rng)
        per_day.append(np.mean([jsd(a, b) for a, b in zip(g.states, t.states)]))
    return float(np.mean(per_day))


@pytest.mark.slow
def test_c6_end_to_end_recovery(synthetic_days, gcl_runs, acceptance):
    train_days, test_days = synthetic_days
    _, policy, diag, secs = gcl_runs[GCL_SEEDS[0]]
    assert len(diag) >= GCL_OUTER_ITERS
    mfg = _rollout_hourly_jsd(policy, test_days)

    n = train_days[0].n_states
    order = baselines.var_order_select(train_days, range(1, n - 1))
    model = baselines.var_fit(train_days, order)
    var = float(np.mean([baselines.mean_hourly_jsd(baselines.var_forecast_day(model, t.states), t.states)
                         for t in test_days]))
    var1 = baselines.var_fit(train_days, 1)
    var1_jsd = float(np.mean([baselines.mean_hourly_jsd(baselines.var_forecast_day(var1, t.states), t.states)
                              for t in test_days]))
    reference = 2 * _rollout_hourly_jsd(PolicyParams(THETA_STAR, 1e4), test_days, seed=1)

    ok = acceptance(6, "end-to-end synthetic recovery", mfg < 0.05 and mfg < var and secs < 1800,
                    f"MFG hourly JSD {mfg:.3e} (theta {policy.theta:.3f}); VAR({order}) {var:.3e}; "
                    f"VAR(1) {var1_jsd:.3e}; 2x true-theta rollout {reference:.3e}; training {secs:.0f}s")
    assert ok


@pytest.mark.slow
def test_c7_reward_separation(synthetic_days, gcl_runs, acceptance):
    train_days, _ = synthetic_days
    d = train_days[0].d
    demo_pi = np.concatenate([t.states[:-1] for t in train_days])
    demo_P = np.concatenate([t.actions for t in train_days])
    rng = np.random.default_rng(99)
    rand_pi = rng.dirichlet(np.ones(d), size=1000)
    rand_P = rng.dirichlet(np.ones(d), size=(1000, d))
    margins = []
    for seed in GCL_SEEDS:
        W = gcl_runs[seed][0]
        margins.append(float(rewardnet.forward(demo_pi, demo_P, W).mean() - rewardnet.forward(rand_pi, rand_P, W).mean()))
    med = float(np.median(margins))
    ok = acceptance(7, "reward separation", med > 0,
                    f"median margin {med:.4f} (per seed {np.round(margins, 4).tolist()})")
    assert ok


def test_c8_baseline_sanity(rng, acceptance):
    t0 = time.perf_counter()
    d = 4
    M = rng.dirichlet(np.ones(d), size=d).T  # column-stochastic: keeps the simplex invariant
    A = 0.8 * M + 0.2 * np.full((d, d), 1 / d)
    days = []
    for pi in rng.dirichlet(np.ones(d), size=20):
        seq = [pi]
        for _ in range(15):
            seq.append(A @ seq[-1])
        days.append(np.array(seq))
    model = baselines.var_fit(days, 1)
    # on simplex data only the map restricted to the simplex is identified
    effective = model.coefs[0] + np.outer(model.intercept, np.ones(d))
    err = float(np.linalg.norm(effective - A))
    _, hist = baselines.rnn_fit(days, epochs=100, lr=1e-2, seed=0)
    secs = time.perf_counter() - t0
    ok = acceptance(8, "baseline sanity", err < 1e-6 and hist[-1] < hist[0] and secs < 60,
                    f"VAR(1) Frobenius error {err:.1e}; RNN loss {hist[0]:.3e} -> {hist[-1]:.3e} "
                    f"over 100 epochs; {secs:.1f}s")
    assert ok
