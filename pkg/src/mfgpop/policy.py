"""Row-wise Dirichlet policy over transition matrices.

Row ``i`` of the action is drawn from ``Dirichlet(alpha^i)`` with

    alpha^i_j = c * softplus(theta * (pi_j - pi_i))

so people drift towards topics that are currently more popular than their own,
with ``theta`` controlling how strongly and ``c`` how noisily.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import LOG_FLOOR

DEFAULT_ALPHA_SCALE = 1e4
DEFAULT_THETA_INIT = 1.0

# Bernoulli-number coefficients of the asymptotic expansion of digamma
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyParams:
    theta: float = DEFAULT_THETA_INIT
    c: float = DEFAULT_ALPHA_SCALE

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise PolicyError(f"theta must be finite, got {self.theta}")
        if not (self.c > 0 and math.isfinite(self.c)):
            raise PolicyError(f"alpha scale c must be positive, got {self.c}")


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _diffs(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    return pi[None, :] - pi[:, None]  # [i, j] = pi_j - pi_i


def alpha(pi, params: PolicyParams) -> np.ndarray:
    """Concentration matrix; row ``i`` parameterises the Dirichlet for topic ``i``.

    Depends on ``pi`` only through differences, so ``pi`` need not be normalised.
    """
    return params.c * softplus(params.theta * _diffs(pi))


def sample(alpha_mat, rng: np.random.Generator) -> np.ndarray:
    """Draw one transition matrix, each row from ``Dirichlet(alpha[i])``.

    Gammas are drawn as ``Gamma(a + 1) * U**(1/a)`` for ``a < 1`` and combined in
    log space, so tiny concentrations never produce an all-zero row.
    """
    a = np.asarray(alpha_mat, dtype=float)
    if a.ndim != 2 or not np.all(np.isfinite(a)) or np.any(a <= 0.0):
        raise PolicyError("Dirichlet concentrations must be finite and strictly positive")
    small = a < 1.0
    g = rng.standard_gamma(np.where(small, a + 1.0, a))
    u = rng.random(a.shape)
    with np.errstate(divide="ignore"):
        logg = np.log(g)
    logg = np.where(small, logg + np.log(u) / a, logg)
    logg -= logg.max(axis=1, keepdims=True)
    P = np.exp(logg)
    P /= P.sum(axis=1, keepdims=True)
    return P


def log_beta(a) -> np.ndarray:
    """Row-wise ``ln B(a) = sum_j ln Gamma(a_j) - ln Gamma(sum_j a_j)``."""
    a = np.asarray(a, dtype=float)
    return gammaln(a).sum(axis=-1) - gammaln(a.sum(axis=-1))


def log_density(P, alpha_mat) -> float:
    """Log of the product of the row Dirichlet densities."""
    P = np.asarray(P, dtype=float)
    a = np.asarray(alpha_mat, dtype=float)
    logp = np.log(np.maximum(P, LOG_FLOOR))
    return float(np.sum((a - 1.0) * logp) - np.sum(log_beta(a)))


def policy_log_density(P, pi, params: PolicyParams) -> float:
    return log_density(P, alpha(pi, params))


def trajectory_log_density(states, actions, params: PolicyParams) -> float:
    """``sum_n ln F(P^n; pi^n, theta)`` over the actions of a trajectory."""
    return float(sum(policy_log_density(P, pi, params) for pi, P in zip(states, actions)))


def grad_log_theta(P, pi, params: PolicyParams) -> float:
    """Exact ``d/dtheta ln F(P; pi, theta)``."""
    P = np.asarray(P, dtype=float)
    dd = _diffs(pi)
    x = params.theta * dd
    a = params.c * softplus(x)
    dlog_da = np.log(np.maximum(P, LOG_FLOOR)) - digamma(a) + digamma(a.sum(axis=1, keepdims=True))
    da_dtheta = params.c * sigmoid(x) * dd
    return float(np.sum(dlog_da * da_dtheta))


def digamma(x):
    """Digamma for positive arguments.

    Shifts small arguments above 6 with ``psi(x) = psi(x + 1) - 1/x`` and then
    applies the asymptotic series; relative error is around 1e-13.
    """
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise PolicyError("digamma is only implemented for x > 0")
    x = x.copy()
    shift = np.zeros_like(x)
    while True:
        low = x < 6.0
        if not low.any():
            break
        shift = np.where(low, shift - 1.0 / np.where(low, x, 1.0), shift)
        x = np.where(low, x + 1.0, x)
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for coef in reversed(_DIGAMMA_SERIES):
        series = (series + coef) * inv2
    out = np.log(x) - 0.5 / x - series + shift
    return out if out.ndim else float(out)
