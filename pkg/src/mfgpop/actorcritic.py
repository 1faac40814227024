"""Finite-horizon episodic actor-critic for the population MDP.

Each episode starts from an initial distribution drawn from the training days,
samples one transition matrix per step from the Dirichlet policy, and updates
the value weights and ``theta`` from the TD error after every step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import critic
from .core import Trajectory, _push, as_distribution
from .policy import PolicyParams, alpha, grad_log_theta, sample

log = logging.getLogger(__name__)

# (pi, P) -> scalar reward of one state-action pair
StepReward = Callable[[np.ndarray, np.ndarray], float]


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class Schedules:
    """Step sizes for episode ``s >= 1``: actor ``beta0 / s``, critic ``xi0 / (s ln ln(s + e))``."""

    beta0: float = 0.1
    xi0: float = 0.1

    def actor(self, s: int) -> float:
        return self.beta0 / s

    def critic(self, s: int) -> float:
        return self.xi0 / (s * math.log(math.log(s + math.e)))


def rollout(params: PolicyParams, pi0, n_states: int, reward_fn: StepReward | None, rng: np.random.Generator,
            day_id: int = 0):
    """Sample one trajectory of ``n_states`` states and the per-step rewards."""
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    pi = np.array(as_distribution(pi0))
    d = pi.shape[0]
    states = [pi]
    actions = []
    rewards = []
    for _ in range(n_states - 1):
        P = sample(alpha(pi, params), rng)
        rewards.append(0.0 if reward_fn is None else float(reward_fn(pi, P)))
        pi = _push(pi, P)
        states.append(pi)
        actions.append(P)
    traj = Trajectory(day_id, np.array(states), np.array(actions).reshape(n_states - 1, d, d))
    return traj, np.array(rewards)


def initial_value_weights(params: PolicyParams, pi0_set: Sequence, n_states: int, reward_fn: StepReward,
                          rng: np.random.Generator, rollouts: int = 20) -> np.ndarray:
    """Critic weights fitted to Monte-Carlo returns of the current policy.

    Every state visited by ``rollouts`` episodes per start is regressed on its
    reward-to-go, so the first TD errors measure the action rather than the
    missing baseline.
    """
    pis, targets = [], []
    for pi0 in pi0_set:
        for _ in range(rollouts):
            traj, rewards = rollout(params, pi0, n_states, reward_fn, rng)
            togo = np.cumsum(rewards[::-1])[::-1]
            pis.extend(traj.states[:-1])
            targets.extend(togo)
    if not pis:
        return critic.init_weights(np.asarray(pi0_set[0]).shape[0])
    return critic.fit(pis, targets)


def train(params: PolicyParams, value_w, pi0_set: Sequence, n_states: int, reward_fn: StepReward,
          episodes: int, rng: np.random.Generator, schedules: Schedules = Schedules()):
    """Run ``episodes`` episodes of actor-critic; returns ``(params, w, returns)``.

    The value of the terminal state is fixed at zero.
    """
    if episodes < 1:
        raise ValueError("need at least one episode")
    if len(pi0_set) == 0:
        raise ValueError("empty set of initial distributions")
    starts = [np.array(as_distribution(p)) for p in pi0_set]
    theta = float(params.theta)
    c = params.c
    w = np.array(value_w, dtype=float)
    returns = np.zeros(episodes)
    for s in range(1, episodes + 1):
        beta = schedules.actor(s)
        xi = schedules.critic(s)
        pi = starts[rng.integers(len(starts))]
        total = 0.0
        for n in range(n_states - 1):
            current = PolicyParams(theta, c)
            a = alpha(pi, current)
            if not np.all(a > 0):
                raise TrainingDiverged(
                    f"episode {s}: theta={theta:.4g} drives Dirichlet concentrations to zero; "
                    f"the actor step size (beta={beta:.3g}) is likely too large"
                )
            P = sample(a, rng)
            R = float(reward_fn(pi, P))
            nxt = _push(pi, P)
            phi = critic.features(pi)
            v_next = 0.0 if n == n_states - 2 else critic.value(nxt, w)
            delta = R + v_next - phi @ w
            g_theta = grad_log_theta(P, pi, current)
            w = w + xi * delta * phi
            theta = theta + beta * delta * g_theta
            if not (math.isfinite(delta) and math.isfinite(theta) and np.all(np.isfinite(w))):
                raise TrainingDiverged(
                    f"episode {s} step {n}: delta={delta!r}, theta={theta!r}; "
                    f"learning rates (beta={beta:.3g}, xi={xi:.3g}) are likely too large"
                )
            total += R
            pi = nxt
        returns[s - 1] = total
    log.debug("actor-critic finished: theta=%.4f mean return (last 10%%)=%.4f",
              theta, returns[-max(1, episodes // 10):].mean())
    return PolicyParams(theta, c), w, returns
