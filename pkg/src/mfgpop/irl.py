"""Sample-based maximum-entropy IRL (guided cost learning) for the population MDP.

Demonstration days are assumed to follow ``p(tau) ~ exp(R_W(tau))``.  The
partition function is estimated from trajectories sampled by every policy
snapshot seen so far, and the policy is improved against the current reward
with the actor-critic solver between reward updates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import actorcritic, critic, rewardnet
from .core import Trajectory, jsd, stack_pairs
from .policy import DEFAULT_ALPHA_SCALE, DEFAULT_THETA_INIT, PolicyParams, trajectory_log_density

log = logging.getLogger(__name__)

WEIGHT_MODES = ("unity", "mis")
HIST_BINS = 50


class IRLError(RuntimeError):
    pass


class GCLDiverged(IRLError):
    """Raised on a non-finite loss; carries the last parameters that produced a finite one."""

    def __init__(self, msg, last_good_reward, last_good_policy):
        super().__init__(msg)
        self.last_good_reward = last_good_reward
        self.last_good_policy = last_good_policy


def log_importance_weight(log_densities: Sequence[float]) -> float:
    """``ln z`` with ``z = [mean_k F_k(tau)]^-1`` from per-snapshot log densities."""
    ld = np.asarray(log_densities, dtype=float)
    if ld.size == 0:
        raise IRLError("need at least one policy snapshot")
    return float(math.log(ld.size) - logsumexp(ld))


def importance_weight(traj: Trajectory, snapshots: Sequence[PolicyParams], mode: str = "mis") -> float:
    if mode == "unity":
        return 1.0
    if mode != "mis":
        raise IRLError(f"unknown weight mode {mode!r}")
    lds = [trajectory_log_density(traj.states[:-1], traj.actions, p) for p in snapshots]
    return math.exp(log_importance_weight(lds))


@dataclass
class SampleBuffer:
    """Policy samples, the index of the snapshot that drew each one, and their
    log densities under every snapshot (needed for the mixture weights)."""

    trajectories: list = field(default_factory=list)
    source: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    log_dens: list = field(default_factory=list)  # log_dens[t][k]

    def __len__(self):
        return len(self.trajectories)

    def add_snapshot(self, params: PolicyParams) -> int:
        self.snapshots.append(params)
        for traj, row in zip(self.trajectories, self.log_dens):
            row.append(trajectory_log_density(traj.states[:-1], traj.actions, params))
        return len(self.snapshots) - 1

    def add(self, trajs: Sequence[Trajectory], k: int) -> None:
        if not 0 <= k < len(self.snapshots):
            raise IRLError(f"snapshot index {k} out of range")
        for traj in trajs:
            row = [trajectory_log_density(traj.states[:-1], traj.actions, p) for p in self.snapshots]
            if not np.all(np.isfinite(row)):
                raise IRLError("sample trajectory has a non-finite log density")
            self.trajectories.append(traj)
            self.source.append(k)
            self.log_dens.append(row)

    def log_weights(self, idx, mode: str) -> np.ndarray:
        if mode == "unity":
            return np.zeros(len(idx))
        if mode != "mis":
            raise IRLError(f"unknown weight mode {mode!r}")
        return np.array([log_importance_weight(self.log_dens[i]) for i in idx])


def _batch_pairs(trajs: Sequence[Trajectory]):
    pis, Ps = stack_pairs(trajs)
    lengths = np.array([t.actions.shape[0] for t in trajs])
    owner = np.repeat(np.arange(len(trajs)), lengths)
    return pis, Ps, owner


def trajectory_rewards(trajs: Sequence[Trajectory], params: dict) -> np.ndarray:
    pis, Ps, owner = _batch_pairs(trajs)
    r = rewardnet.forward(pis, Ps, params)
    return np.bincount(owner, weights=r, minlength=len(trajs))


def irl_loss(params: dict, demo: Sequence[Trajectory], samples: Sequence[Trajectory], log_z=None,
             l1: float = 0.0, l2: float = 0.0, rng: np.random.Generator | None = None):
    """Negative log-likelihood of the demos and its gradient.

    ``loss = -mean_i R_W(demo_i) + log(mean_j z_j exp R_W(sample_j)) + penalty``.
    ``log_z`` defaults to zeros (unit weights).  With ``rng`` a dropout mask is
    drawn once and shared by value and gradient.
    """
    if len(demo) == 0 or len(samples) == 0:
        raise IRLError("demo and sample batches must be non-empty")
    L, M = len(demo), len(samples)
    log_z = np.zeros(M) if log_z is None else np.asarray(log_z, dtype=float)
    if np.all(np.isneginf(log_z)):
        raise IRLError("all importance weights are zero")
    batch = list(demo) + list(samples)
    pis, Ps, owner = _batch_pairs(batch)
    masks = rewardnet.dropout_masks(rng, pis.shape[0]) if rng is not None else None
    cache = rewardnet.forward_cache(pis, Ps, params, masks)
    R = np.bincount(owner, weights=cache.y, minlength=len(batch))
    R_demo, R_samp = R[:L], R[L:]
    a = log_z + R_samp
    lse = logsumexp(a)
    loss = -R_demo.mean() + lse - math.log(M)
    soft = np.exp(a - lse)
    per_traj = np.concatenate([np.full(L, -1.0 / L), soft])
    grads = rewardnet.backward(cache, params, per_traj[owner])
    if l1 or l2:
        pen, pgrads = rewardnet.regularized_loss_terms(params, l1, l2)
        loss += pen
        for k in grads:
            grads[k] = grads[k] + pgrads[k]
    return float(loss), grads


def reward_histogram_jsd(r_a, r_b, bins: int = HIST_BINS) -> float:
    """JSD between histograms of two reward samples on ``bins`` equal bins over [-1, 1]."""
    edges = np.linspace(-1.0, 1.0, bins + 1)
    ha, _ = np.histogram(np.clip(r_a, -1, 1), bins=edges)
    hb, _ = np.histogram(np.clip(r_b, -1, 1), bins=edges)
    return jsd(ha / max(ha.sum(), 1), hb / max(hb.sum(), 1))


@dataclass
class GCLConfig:
    outer_iters: int = 5
    samples_per_iter: int = 10
    demo_batch: int = 8
    sample_batch: int = 16
    lr: float = 1e-4
    dR: float = 1e-4
    max_inner: int = 500
    l1: float = 1e-4
    l2: float = 1e-4
    dropout: bool = True
    weight_mode: str = "unity"
    theta_init: float = DEFAULT_THETA_INIT
    alpha_scale: float = DEFAULT_ALPHA_SCALE
    ac_episodes: int = 4000
    beta0: float = 0.1
    xi0: float = 0.1
    critic_warmup: int = 2
    cold_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.weight_mode not in WEIGHT_MODES:
            raise IRLError(f"weight_mode must be one of {WEIGHT_MODES}, got {self.weight_mode!r}")


def _sample_days(params, starts, count, n_states, rng):
    out = []
    for _ in range(count):
        pi0 = starts[rng.integers(len(starts))]
        traj, _ = actorcritic.rollout(params, pi0, n_states, None, rng)
        out.append(traj)
    return out


def _choose(n, k, rng):
    return rng.choice(n, size=min(k, n), replace=False)


def gcl_train(demos: Sequence[Trajectory], config: GCLConfig = GCLConfig(), callback=None):
    """Alternate reward descent and policy improvement.

    Returns ``(reward_params, policy_params, diagnostics)``; ``diagnostics`` holds
    one dict per outer iteration.  ``callback(record)`` is invoked after each one.
    """
    if len(demos) == 0:
        raise IRLError("empty demonstration set")
    rng = np.random.default_rng(config.seed)
    d = demos[0].d
    n_states = demos[0].n_states
    starts = [t.states[0] for t in demos]
    demo_pis, demo_Ps = stack_pairs(demos)

    W = rewardnet.xavier_init(rng, d)
    adam = rewardnet.AdamState.for_params(W)
    policy = PolicyParams(config.theta_init, config.alpha_scale)
    w = critic.init_weights(d)
    buffer = SampleBuffer()
    diagnostics = []
    schedules = actorcritic.Schedules(config.beta0, config.xi0)

    for it in range(1, config.outer_iters + 1):
        k = buffer.add_snapshot(policy)
        buffer.add(_sample_days(policy, starts, config.samples_per_iter, n_states, rng), k)

        # stopping rule on the average demo trajectory reward R_W(tau)
        prev = trajectory_rewards(demos, W).mean()
        inner = 0
        loss = float("nan")
        while inner < config.max_inner:
            di = _choose(len(demos), config.demo_batch, rng)
            si = _choose(len(buffer), config.sample_batch, rng)
            loss, grads = irl_loss(
                W,
                [demos[i] for i in di],
                [buffer.trajectories[i] for i in si],
                buffer.log_weights(si, config.weight_mode),
                config.l1,
                config.l2,
                rng if config.dropout else None,
            )
            if not math.isfinite(loss):
                raise GCLDiverged(f"non-finite IRL loss at outer iteration {it}, inner step {inner}", W, policy)
            W = rewardnet.adam_update(W, grads, adam, config.lr)
            inner += 1
            cur = trajectory_rewards(demos, W).mean()
            if abs(cur - prev) <= config.dR:
                break
            prev = cur

        def reward_fn(pi, P, _W=W):
            return rewardnet.reward_scalar(pi, P, _W)

        if config.cold_start:
            policy = PolicyParams(config.theta_init, config.alpha_scale)
        if config.critic_warmup > 0:
            w = actorcritic.initial_value_weights(policy, starts, n_states, reward_fn, rng, config.critic_warmup)
        policy, w, returns = actorcritic.train(
            policy, w, starts, n_states, reward_fn, config.ac_episodes, rng, schedules
        )

        generated = _sample_days(policy, starts, len(starts), n_states, rng)
        gen_pis, gen_Ps = stack_pairs(generated)
        r_demo = rewardnet.forward(demo_pis, demo_Ps, W)
        r_gen = rewardnet.forward(gen_pis, gen_Ps, W)
        record = {
            "iteration": it,
            "inner_steps": inner,
            "loss": float(loss),
            "theta": float(policy.theta),
            "demo_reward": float(r_demo.mean()),
            "generated_reward": float(r_gen.mean()),
            "reward_jsd": reward_histogram_jsd(r_demo, r_gen),
            "mean_return": float(returns[-max(1, len(returns) // 10):].mean()),
            "buffer_size": len(buffer),
        }
        diagnostics.append(record)
        log.info("gcl iteration %d: %s", it, record)
        if callback is not None:
            callback(record)

    return W, policy, diagnostics


def config_dict(config: GCLConfig) -> dict:
    return asdict(config)
