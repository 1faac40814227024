"""Synthetic population days with a known behaviour policy.

Initial distributions favour low topic indices (topics are indexed by decreasing
initial popularity), and each day is rolled forward with the Dirichlet policy
at a fixed ``theta_star``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .actorcritic import rollout
from .core import TopicReward
from .policy import DEFAULT_ALPHA_SCALE, PolicyParams


def synth_reward(kind: str = "popularity", gamma: float = 1.0, lam: float = 0.1) -> TopicReward:
    """Hand-written topic rewards with known structure.

    ``popularity``: ``r_ij = pi_j ** gamma``; ``sticky``: ``r_ij = pi_j - lam * [i != j]``.
    Both accept object arrays of ``Fraction`` (popularity only for integer ``gamma``);
    ``lam`` is then converted to the exact rational of its float value.
    """
    if kind == "popularity":
        if gamma == int(gamma):
            g = int(gamma)

            def popularity(pi, i, row):
                return np.asarray(pi) ** g if g != 1 else np.array(pi, copy=True)
        else:
            def popularity(pi, i, row):
                return np.asarray(pi, dtype=float) ** gamma
        return popularity
    if kind == "sticky":
        def sticky(pi, i, row):
            pi = np.asarray(pi)
            exact = pi.dtype == object
            pen = np.full(pi.shape, Fraction(lam) if exact else lam, dtype=object if exact else float)
            pen[i] = 0 * pen[i]
            return pi - pen
        return sticky
    raise ValueError(f"unknown synthetic reward kind {kind!r}")


def as_step_reward(reward: TopicReward):
    """MDP reward ``R(pi, P) = sum_i pi_i sum_j P_ij r_ij`` as a ``(pi, P) -> float`` callable."""
    def step(pi, P):
        total = 0.0
        for i in range(len(pi)):
            total += pi[i] * float(P[i] @ np.asarray(reward(pi, i, P[i]), dtype=float))
        return total
    return step


@dataclass(frozen=True)
class InitialSampler:
    """Dirichlet over initial distributions with concentrations ``a0 * rho**i``."""

    d: int
    a0: float = 10.0
    rho: float = 0.7

    @property
    def concentrations(self) -> np.ndarray:
        return self.a0 * self.rho ** np.arange(self.d)

    def __call__(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = rng.dirichlet(self.concentrations, size=size)
        return out / out.sum(axis=1, keepdims=True)


def generate(d: int = 15, n_states: int = 16, m_train: int = 21, m_test: int = 6, theta_star: float = 8.64,
             c: float = DEFAULT_ALPHA_SCALE, seed: int = 0, a0: float = 10.0, rho: float = 0.7):
    """Return ``(train, test)`` lists of trajectories; day ids run 0..m_train+m_test-1."""
    master = np.random.SeedSequence(seed)
    init_seq, *day_seqs = master.spawn(1 + m_train + m_test)
    starts = InitialSampler(d, a0, rho)(np.random.default_rng(init_seq), m_train + m_test)
    params = PolicyParams(theta_star, c)
    days = []
    for k, (pi0, ss) in enumerate(zip(starts, day_seqs)):
        traj, _ = rollout(params, pi0, n_states, None, np.random.default_rng(ss), day_id=k)
        days.append(traj)
    return days[:m_train], days[m_train:]
