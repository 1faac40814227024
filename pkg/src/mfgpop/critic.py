"""Linear value baseline on quadratic polynomial features of the distribution."""

from __future__ import annotations

import numpy as np


def n_features(d: int) -> int:
    return 1 + d + d * (d + 1) // 2


def features(pi) -> np.ndarray:
    """``[1, pi_0..pi_{d-1}, pi_i * pi_j for i <= j]`` in lexicographic ``(i, j)`` order."""
    pi = np.asarray(pi, dtype=float)
    iu = np.triu_indices(pi.shape[0])
    quad = np.outer(pi, pi)[iu]
    return np.concatenate(([1.0], pi, quad))


def init_weights(d: int) -> np.ndarray:
    return np.zeros(n_features(d))


def value(pi, w) -> float:
    phi = features(pi)
    w = np.asarray(w, dtype=float)
    if w.shape != phi.shape:
        raise ValueError(f"value weights have shape {w.shape}, expected {phi.shape}")
    return float(phi @ w)


def grad_w(pi) -> np.ndarray:
    return features(pi)


def fit(pis, targets, ridge: float = 1e-8) -> np.ndarray:
    """Least-squares weights mapping ``features(pi)`` to ``targets``."""
    X = np.array([features(p) for p in pis])
    y = np.asarray(targets, dtype=float)
    A = X.T @ X + ridge * np.eye(X.shape[1])
    return np.linalg.solve(A, X.T @ y)
