"""Simplex and stochastic-matrix primitives for the complete-graph population game.

A population distribution ``pi`` is a length-``d`` probability vector over topics.
A transition matrix ``P`` is ``d x d`` and row-stochastic; row ``i`` is the action
taken by the people currently in topic ``i``.  Both are plain ``numpy`` arrays;
the ``as_*`` helpers validate and return read-only float copies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

SIMPLEX_TOL = 1e-9
LOG_FLOOR = 1e-12

# (pi, i, row) -> length-d vector of per-destination rewards r_ij
TopicReward = Callable[[np.ndarray, int, np.ndarray], np.ndarray]


class SimplexError(ValueError):
    """Raised when an array violates the distribution / stochastic-matrix invariants."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def as_distribution(values, tol: float = SIMPLEX_TOL) -> np.ndarray:
    return _frozen(_checked_distribution(values, tol))


def _checked_distribution(values, tol: float = SIMPLEX_TOL) -> np.ndarray:
    pi = np.asarray(values, dtype=float)
    if pi.ndim != 1 or pi.shape[0] < 2:
        raise SimplexError(f"distribution must be a vector with d >= 2 entries, got shape {pi.shape}")
    # cheap combined test first; NaN fails every comparison, inf fails the sum
    total = np.add.reduce(pi)
    if not (np.minimum.reduce(pi) >= 0.0 and abs(total - 1.0) <= tol):
        if not np.all(np.isfinite(pi)):
            raise SimplexError("distribution has non-finite entries")
        if np.any(pi < 0.0):
            raise SimplexError(f"distribution has negative entries: min={pi.min():.3g}")
        raise SimplexError(f"distribution sums to {total!r}, not 1")
    return pi


def as_transition_matrix(rows, tol: float = SIMPLEX_TOL) -> np.ndarray:
    return _frozen(_checked_matrix(rows, tol))


def _checked_matrix(rows, tol: float = SIMPLEX_TOL) -> np.ndarray:
    P = np.asarray(rows, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise SimplexError(f"transition matrix must be square, got shape {P.shape}")
    sums = np.add.reduce(P, axis=1)
    # non-negative rows summing to one cannot hold entries above one
    if not (np.minimum.reduce(P, axis=None) >= 0.0 and np.minimum.reduce(sums) >= 1.0 - tol
            and np.maximum.reduce(sums) <= 1.0 + tol):
        if not np.all(np.isfinite(P)):
            raise SimplexError("transition matrix has non-finite entries")
        if np.any(P < 0.0) or np.any(P > 1.0):
            raise SimplexError("transition matrix entries must lie in [0, 1]")
        i = int(np.flatnonzero(np.abs(sums - 1.0) > tol)[0])
        raise SimplexError(f"row {i} of transition matrix sums to {sums[i]!r}, not 1")
    return P


def forward_step(pi, P) -> np.ndarray:
    """Push the population one step forward: ``out_j = sum_i P_ij pi_i``.

    The result is renormalised exactly so repeated steps do not drift off the simplex.
    """
    pi = _checked_distribution(pi)
    P = _checked_matrix(P)
    if P.shape[0] != pi.shape[0]:
        raise SimplexError(f"dimension mismatch: pi has {pi.shape[0]} entries, P is {P.shape}")
    return _frozen(_push(pi, P))


def _push(pi: np.ndarray, P: np.ndarray) -> np.ndarray:
    # unchecked fast path shared by rollouts
    out = pi @ P
    return out / out.sum()


def topic_reward(pi, P, i: int, reward: TopicReward) -> float:
    """Reward collected by topic ``i``: ``sum_j P_ij r_ij(pi, P_i)``."""
    pi = as_distribution(pi)
    P = as_transition_matrix(P)
    row = P[i]
    return float(row @ np.asarray(reward(pi, i, row), dtype=float))


def average_reward(pi, P, V, reward: TopicReward) -> np.ndarray:
    """Per-topic average reward ``e_i = sum_j P_ij (r_ij(pi, P_i) + V_j)``."""
    pi = as_distribution(pi)
    P = as_transition_matrix(P)
    V = np.asarray(V, dtype=float)
    d = pi.shape[0]
    if V.shape != (d,):
        raise SimplexError(f"value vector must have shape ({d},), got {V.shape}")
    out = np.empty(d)
    for i in range(d):
        r = np.asarray(reward(pi, i, P[i]), dtype=float)
        out[i] = P[i] @ (r + V)
    return out


def mdp_reward(pi, P, reward: TopicReward) -> float:
    """Population-weighted reward ``R(pi, P) = sum_i pi_i sum_j P_ij r_ij``."""
    pi = as_distribution(pi)
    P = as_transition_matrix(P)
    total = 0.0
    for i in range(pi.shape[0]):
        total += pi[i] * float(P[i] @ np.asarray(reward(pi, i, P[i]), dtype=float))
    return total


def jsd(p, q) -> float:
    """Jensen-Shannon divergence in nats; bounded by ``ln 2``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise SimplexError(f"jsd: shape mismatch {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    lp = np.log(np.maximum(p, LOG_FLOOR))
    lq = np.log(np.maximum(q, LOG_FLOOR))
    lm = np.log(np.maximum(m, LOG_FLOOR))
    val = 0.5 * float(p @ (lp - lm)) + 0.5 * float(q @ (lq - lm))
    return min(max(val, 0.0), math.log(2.0))


@dataclass(frozen=True)
class Trajectory:
    """One day of population data: ``N`` states and the ``N - 1`` actions between them."""

    day_id: int
    states: np.ndarray  # (N, d)
    actions: np.ndarray = field(repr=False)  # (N - 1, d, d)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        actions = np.asarray(self.actions, dtype=float)
        if states.ndim != 2:
            raise SimplexError(f"states must be (N, d), got {states.shape}")
        n, d = states.shape
        if n < 1:
            raise SimplexError("trajectory needs at least one state")
        if n == 1 and actions.size == 0:
            actions = np.zeros((0, d, d))
        if actions.shape != (n - 1, d, d):
            raise SimplexError(f"actions must be ({n - 1}, {d}, {d}), got {actions.shape}")
        for k, s in enumerate(states):
            try:
                as_distribution(s)
            except SimplexError as exc:
                raise SimplexError(f"state {k}: {exc}") from None
        for k, a in enumerate(actions):
            try:
                as_transition_matrix(a)
            except SimplexError as exc:
                raise SimplexError(f"action {k}: {exc}") from None
        object.__setattr__(self, "states", _frozen(states))
        object.__setattr__(self, "actions", _frozen(actions))

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """State-action pairs ``(pi^n, P^n)`` for ``n = 0 .. N-2``."""
        return self.states[:-1], self.actions

    def to_record(self) -> dict:
        return {"day": int(self.day_id), "pi": self.states.tolist(), "P": self.actions.tolist()}

    @classmethod
    def from_record(cls, rec: dict) -> "Trajectory":
        try:
            day = rec["day"]
            pi = rec["pi"]
            P = rec["P"]
        except (KeyError, TypeError) as exc:
            raise SimplexError(f"malformed record: missing field {exc}") from None
        if not isinstance(day, int):
            raise SimplexError(f"malformed record: day must be an integer, got {day!r}")
        states = np.asarray(pi, dtype=float)
        d = states.shape[1] if states.ndim == 2 else 0
        actions = np.asarray(P, dtype=float) if len(P) else np.zeros((0, d, d))
        return cls(day, states, actions)


def save_dataset(trajectories: Iterable[Trajectory], path) -> None:
    """Write one JSON record per line.  Python's float repr round-trips exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for traj in trajectories:
            fh.write(json.dumps(traj.to_record()))
            fh.write("\n")


def load_dataset(path) -> list[Trajectory]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(Trajectory.from_record(rec))
            except (json.JSONDecodeError, SimplexError, ValueError) as exc:
                raise SimplexError(f"{Path(path).name}:{lineno}: {exc}") from None
    return out


def stack_pairs(trajectories: Sequence[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    """All state-action pairs of a dataset as arrays ``(K, d)`` and ``(K, d, d)``."""
    pis = [t.states[:-1] for t in trajectories]
    Ps = [t.actions for t in trajectories]
    return np.concatenate(pis), np.concatenate(Ps)
