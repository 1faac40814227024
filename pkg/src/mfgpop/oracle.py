"""Brute-force ground truth on a rational grid of the simplex.

Every action row is restricted to the grid ``{k / m : k integer, sum k = m}``.
On that finite action set the backward value recursion, the full-matrix MDP
optimum, the Nash-maximizer condition and the row/matrix max interchange can all
be computed exactly by enumeration, which makes them usable as test oracles for
the learning code.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Sequence

import numpy as np

from .core import TopicReward, _push, as_distribution, as_transition_matrix, average_reward

MAX_NODES = 100_000_000
NASH_TOL = 1e-12


class OracleError(RuntimeError):
    pass


def _compositions(m: int, d: int):
    """Integer vectors of length d with non-negative entries summing to m, lexicographic."""
    if d == 1:
        yield (m,)
        return
    for k in range(m + 1):
        for rest in _compositions(m - k, d - 1):
            yield (k,) + rest


@dataclass(frozen=True)
class SimplexGrid:
    d: int
    m: int

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise OracleError(f"grid needs d >= 1 and m >= 1, got d={self.d}, m={self.m}")

    @property
    def size(self) -> int:
        return comb(self.m + self.d - 1, self.d - 1)

    def counts(self) -> list[tuple[int, ...]]:
        return list(_compositions(self.m, self.d))

    @property
    def points(self) -> np.ndarray:
        return np.array(self.counts(), dtype=float) / self.m

    def exact_points(self) -> list[tuple[Fraction, ...]]:
        return [tuple(Fraction(k, self.m) for k in c) for c in self.counts()]


def _row_values(pi, reward: TopicReward, rows: np.ndarray, V_next) -> np.ndarray:
    """``vals[i, k] = sum_j rows[k, j] * (r_ij(pi, rows[k]) + V_next_j)``."""
    d = pi.shape[0]
    vals = np.empty((d, rows.shape[0]))
    for i in range(d):
        for k, q in enumerate(rows):
            r = np.asarray(reward(pi, i, q), dtype=float)
            vals[i, k] = q @ (r + V_next)
    return vals


def backward_hjb(pi_seq: Sequence, reward: TopicReward, grid: SimplexGrid, return_policy: bool = False):
    """Topic values along a fixed distribution sequence, with zero terminal value.

    ``V[n, i] = max_q sum_j q_j (r_ij(pi^n, q) + V[n+1, j])`` for ``n = N-1 .. 0``
    where ``N = len(pi_seq)`` and ``q`` ranges over the grid.  With
    ``return_policy`` the maximising grid row index per ``(n, i)`` is also returned.
    """
    pis = [as_distribution(p) for p in pi_seq]
    rows = grid.points
    if rows.size == 0:
        raise OracleError("empty grid")
    n_steps = len(pis)
    d = grid.d
    V = np.zeros((n_steps + 1, d))
    argbest = np.zeros((n_steps, d), dtype=int)
    for n in range(n_steps - 1, -1, -1):
        vals = _row_values(pis[n], reward, rows, V[n + 1])
        argbest[n] = np.argmax(vals, axis=1)  # first hit = lexicographically smallest row
        V[n] = vals[np.arange(d), argbest[n]]
    if return_policy:
        return V[:n_steps], argbest
    return V[:n_steps]


def _matrix_objective(pi, reward, rows, with_next: bool):
    """MDP reward of every grid matrix (flattened ``(K,) * d`` grid), optionally next states."""
    d = pi.shape[0]
    K = rows.shape[0]
    rowvals = _row_values(pi, reward, rows, np.zeros(d))
    R = np.zeros((K,) * d)
    nxt = np.zeros((K,) * d + (d,)) if with_next else None
    for i in range(d):
        shape = [1] * d
        shape[i] = K
        R = R + pi[i] * rowvals[i].reshape(shape)
        if with_next:
            nxt = nxt + pi[i] * rows.reshape(shape + [d])
    return R.reshape(-1), (nxt.reshape(-1, d) if with_next else None)


def brute_force_mdp(pi0, reward: TopicReward, horizon: int, grid: SimplexGrid):
    """Exhaustive optimum of ``sum_n R(pi^n, P^n)`` over grid matrices.

    ``horizon`` is the number of actions taken.  Returns ``(value, actions)`` where
    ``actions`` has shape ``(horizon, d, d)``.  Ties go to the matrix whose rows come
    first in lexicographic grid order.
    """
    pi0 = as_distribution(pi0)
    if pi0.shape[0] != grid.d:
        raise OracleError(f"grid dimension {grid.d} does not match pi of length {pi0.shape[0]}")
    if horizon < 0:
        raise OracleError("horizon must be non-negative")
    rows = grid.points
    d = grid.d
    K = rows.shape[0]
    n_mat = K**d
    nodes = sum(n_mat**t for t in range(1, horizon + 1))
    if nodes > MAX_NODES:
        raise OracleError(f"search space of {nodes:.3g} nodes exceeds the {MAX_NODES:.0e} limit")
    if horizon == 0:
        return 0.0, np.zeros((0, d, d))

    def unravel(idx):
        return rows[list(np.unravel_index(idx, (K,) * d))]

    def solve(pi, steps):
        R, nxt = _matrix_objective(pi, reward, rows, with_next=steps > 1)
        if steps == 1:
            best = int(np.argmax(R))
            return float(R[best]), [unravel(best)]
        total = np.empty(n_mat)
        tails = []
        for a in range(n_mat):
            v, tail = solve(nxt[a] / nxt[a].sum(), steps - 1)
            total[a] = R[a] + v
            tails.append(tail)
        best = int(np.argmax(total))
        return float(total[best]), [unravel(best)] + tails[best]

    value, actions = solve(pi0, horizon)
    return value, np.array(actions)


def induced_states(pi0, actions) -> np.ndarray:
    """States ``pi^0 .. pi^{H-1}`` at which each of the ``H`` actions is taken."""
    out = [as_distribution(pi0)]
    for P in actions[:-1]:
        out.append(_push(out[-1], as_transition_matrix(P)))
    return np.array(out)


def replace_row(P, i: int, q) -> np.ndarray:
    out = np.array(P, dtype=float)
    out[i] = q
    return out


def verify_nash_maximizer(P, pi, V, reward: TopicReward, grid: SimplexGrid, tol: float = NASH_TOL) -> bool:
    """True iff no topic can raise its average reward by switching to another grid row."""
    P = as_transition_matrix(P)
    e = average_reward(pi, P, V, reward)
    for i in range(P.shape[0]):
        for q in grid.points:
            e_dev = average_reward(pi, replace_row(P, i, q), V, reward)[i]
            if e[i] < e_dev - tol:
                return False
    return True


def interchange_identity_check(pi, V_next, reward: TopicReward, grid: SimplexGrid, exact: bool = True):
    """Compare ``sum_i pi_i max_row`` against ``max`` over whole matrices.

    ``lhs = sum_i pi_i max_q sum_j q_j (r_ij(pi, q) + V_j)`` and ``rhs`` maximises the
    assembled objective ``sum_i pi_i sum_j P_ij r_ij + sum_j (sum_i P_ij pi_i) V_j``
    over every grid matrix.  With ``exact`` all arithmetic is in ``Fraction``; the
    reward must then accept and return rationals (object arrays).
    """
    d = grid.d
    if exact:
        pi = np.array([Fraction(x) for x in pi], dtype=object)
        V = np.array([Fraction(x) for x in V_next], dtype=object)
        rows = [np.array(q, dtype=object) for q in grid.exact_points()]
        zero = Fraction(0)
    else:
        pi = np.asarray(pi, dtype=float)
        V = np.asarray(V_next, dtype=float)
        rows = list(grid.points)
        zero = 0.0

    def dot(a, b):
        s = zero
        for x, y in zip(a, b):
            s += x * y
        return s

    # reward part of each (topic, row) pair; shared by both sides
    rew = [[dot(q, reward(pi, i, q)) for q in rows] for i in range(d)]

    lhs = zero
    for i in range(d):
        lhs += pi[i] * max(rew[i][k] + dot(rows[k], V) for k in range(len(rows)))

    rhs = None
    for combo in itertools.product(range(len(rows)), repeat=d):
        own = zero
        flow = [zero] * d
        for i, k in enumerate(combo):
            own += pi[i] * rew[i][k]
            for j in range(d):
                flow[j] += rows[k][j] * pi[i]
        total = own + dot(flow, V)
        if rhs is None or total > rhs:
            rhs = total
    return lhs, rhs
