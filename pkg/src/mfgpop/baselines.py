"""Sequence-prediction baselines: vector autoregression and a small ReLU RNN.

Both models are fitted on within-day transitions only and forecast a whole day
from its first state(s).  Predictions are projected back onto the simplex.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Trajectory, jsd
from .rewardnet import AdamState, adam_update

log = logging.getLogger(__name__)


SV_CUTOFF = 1e-10


class InsufficientData(ValueError):
    pass


def project_simplex(x) -> np.ndarray:
    """Clip negatives and renormalise; an all-zero vector maps to uniform."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    s = x.sum(axis=-1, keepdims=True)
    d = x.shape[-1]
    return np.where(s > 0, x / np.where(s > 0, s, 1.0), 1.0 / d)


# ---------------------------------------------------------------- VAR


@dataclass(frozen=True)
class VARModel:
    """``pi_t = c + sum_{l=1..p} A_l pi_{t-l}``; ``coefs[l-1]`` is ``A_l``."""

    coefs: np.ndarray  # (p, d, d)
    intercept: np.ndarray  # (d,)

    @property
    def order(self) -> int:
        return self.coefs.shape[0]


def _states(t) -> np.ndarray:
    return t.states if isinstance(t, Trajectory) else np.asarray(t, dtype=float)


def _lagged(seqs, p: int):
    X, Y = [], []
    for S in seqs:
        for n in range(p, S.shape[0]):
            X.append(np.concatenate([S[n - l] for l in range(1, p + 1)]))
            Y.append(S[n])
    return np.array(X), np.array(Y)


def var_fit(trajs, p: int) -> VARModel:
    """Least squares on lagged states within each day (lags never cross days).

    ``trajs`` holds trajectories or raw ``(N, d)`` state arrays.  The fit is done
    on centred regressors with a minimum-norm solution: on simplex data the
    lags sum to one and are collinear with the intercept, so the coefficients
    are only identified up to that direction, and centring keeps the intercept
    carrying the level (a constant series gives ``A = 0``).
    """
    if p < 1:
        raise ValueError("VAR order must be >= 1")
    seqs = [_states(t) for t in trajs]
    if not seqs:
        raise InsufficientData("no trajectories")
    d = seqs[0].shape[1]
    X, Y = _lagged(seqs, p)
    if X.shape[0] < 1 + p * d:
        raise InsufficientData(
            f"order {p} needs at least {1 + p * d} lagged samples, only {X.shape[0]} available"
        )
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    U, sv, Vt = np.linalg.svd(X - xm, full_matrices=False)
    # absolute cutoff as well as relative: centred constant data is pure rounding noise
    keep = sv > max(SV_CUTOFF * np.sqrt(X.shape[0]), sv.max(initial=0.0) * max(X.shape) * np.finfo(float).eps)
    B = Vt[keep].T @ ((U[:, keep].T @ (Y - ym)) / sv[keep, None])
    intercept = ym - xm @ B
    coefs = B.reshape(p, d, d).transpose(0, 2, 1)
    return VARModel(coefs, intercept)


def var_predict(model: VARModel, history, steps: int) -> np.ndarray:
    """``steps`` forecasts following ``history``; only its last ``p`` rows are used."""
    hist = np.asarray(history, dtype=float)
    p = model.order
    if hist.ndim != 2 or hist.shape[0] < p:
        raise InsufficientData(f"VAR({p}) needs {p} initial states")
    window = list(hist[-p:])
    out = []
    for _ in range(steps):
        x = model.intercept + sum(model.coefs[l - 1] @ window[-l] for l in range(1, p + 1))
        window.append(project_simplex(x))
        out.append(window[-1])
    return np.array(out).reshape(steps, hist.shape[1])


def var_forecast_day(model: VARModel, states, n_states: int | None = None) -> np.ndarray:
    """A full day: the first ``p`` observed states followed by forecasts."""
    states = np.asarray(states, dtype=float)
    n = states.shape[0] if n_states is None else n_states
    p = model.order
    return np.vstack([states[:p], var_predict(model, states[:p], n - p)])


def mean_hourly_jsd(pred: np.ndarray, truth: np.ndarray, start: int = 0) -> float:
    return float(np.mean([jsd(a, b) for a, b in zip(pred[start:], truth[start:])]))


def var_order_select(trajs, orders: Sequence[int] = (1, 2, 3, 4, 5),
                     validation_size: int = 5, rounds: int = 10, seed: int = 0) -> int:
    """Pick the order with the lowest mean hourly JSD on random held-out days.

    Every order is scored on the same hours (those after the largest feasible
    order), so short-history orders are not favoured.  Orders whose fit is
    under-determined are skipped; ties go to the smaller order.
    """
    if len(trajs) <= validation_size:
        raise InsufficientData("need more days than the validation size")
    rng = np.random.default_rng(seed)
    n_states = _states(trajs[0]).shape[0]
    # a day of N states only supports lags up to N - 2 with room left to score
    feasible = [p for p in sorted(set(orders)) if 1 <= p <= n_states - 2]
    scores = {p: [] for p in feasible}
    for _ in range(rounds):
        idx = rng.permutation(len(trajs))
        val = [trajs[i] for i in idx[:validation_size]]
        fit = [trajs[i] for i in idx[validation_size:]]
        models = {}
        for p in feasible:
            try:
                models[p] = var_fit(fit, p)
            except InsufficientData:
                continue
        if not models:
            continue
        start = max(models)
        for p, m in models.items():
            errs = [mean_hourly_jsd(var_forecast_day(m, _states(t)), _states(t), start) for t in val]
            scores[p].append(np.mean(errs))
    ranked = [(np.mean(v), p) for p, v in scores.items() if len(v) == rounds]
    if not ranked:
        raise InsufficientData("no VAR order could be fitted")
    return min(ranked)[1]


# ---------------------------------------------------------------- RNN


@dataclass
class RNNModel:
    """``h_{t+1} = ReLU(Wh h_t + Wx pi_t)``, ``pi_{t+1} = softmax(Wo h_{t+1} + bo)``, ``h_0 = 0``."""

    params: dict

    @property
    def d(self) -> int:
        return self.params["Wx"].shape[1]


def rnn_init(d: int, rng: np.random.Generator, scale: float = 0.1) -> RNNModel:
    return RNNModel({
        "Wh": rng.normal(0, scale, (d, d)),
        "Wx": rng.normal(0, scale, (d, d)),
        "Wo": rng.normal(0, scale, (d, d)),
        "bo": np.zeros(d),
    })


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def rnn_loss_grad(model: RNNModel, seqs: np.ndarray, truncate: int | None = None):
    """Mean squared one-step error over a batch ``seqs`` of shape ``(B, T, d)``
    with teacher forcing, and its gradient by backpropagation through time.

    ``truncate`` limits how many steps each error is propagated back.
    """
    p = model.params
    B, T, d = seqs.shape
    steps = T - 1
    hs = [np.zeros((B, d))]
    pre = []
    ys = []
    for t in range(steps):
        a = hs[-1] @ p["Wh"].T + seqs[:, t] @ p["Wx"].T
        pre.append(a)
        h = np.maximum(a, 0.0)
        hs.append(h)
        ys.append(_softmax(h @ p["Wo"].T + p["bo"]))
    Y = np.stack(ys, axis=1)
    err = Y - seqs[:, 1:]
    norm = B * steps
    loss = float((err**2).sum() / norm)
    g = {k: np.zeros_like(v) for k, v in p.items()}
    K = steps if truncate is None else truncate
    for t in range(steps):
        y = ys[t]
        gy = 2.0 * err[:, t] / norm
        gz = y * (gy - (gy * y).sum(axis=1, keepdims=True))
        g["Wo"] += gz.T @ hs[t + 1]
        g["bo"] += gz.sum(axis=0)
        gh = gz @ p["Wo"]
        for u in range(t, max(t - K, -1), -1):
            ga = gh * (pre[u] > 0)
            g["Wh"] += ga.T @ hs[u]
            g["Wx"] += ga.T @ seqs[:, u]
            gh = ga @ p["Wh"]
    return loss, g


def rnn_fit(trajs, epochs: int = 2000, lr: float = 1e-2, seed: int = 0,
            truncate: int | None = None, model: RNNModel | None = None):
    """Full-batch Adam on all training days; returns ``(model, loss_history)``."""
    if not trajs:
        raise InsufficientData("no trajectories")
    seqs = np.stack([_states(t) for t in trajs])
    rng = np.random.default_rng(seed)
    model = model or rnn_init(seqs.shape[2], rng)
    params = {k: v.copy() for k, v in model.params.items()}
    state = AdamState.for_params(params)
    history = np.zeros(epochs)
    for e in range(epochs):
        loss, g = rnn_loss_grad(RNNModel(params), seqs, truncate)
        history[e] = loss
        params = adam_update(params, g, state, lr)
    return RNNModel(params), history


def _rnn_step(p, h, x):
    h = np.maximum(p["Wh"] @ h + p["Wx"] @ x, 0.0)
    return h, _softmax(p["Wo"] @ h + p["bo"])


def rnn_predict(model: RNNModel, history, steps: int) -> np.ndarray:
    """Run the network over ``history`` (teacher forcing), then ``steps`` closed-loop forecasts."""
    hist = np.atleast_2d(np.asarray(history, dtype=float))
    p = model.params
    h = np.zeros(model.d)
    for x in hist[:-1]:
        h, _ = _rnn_step(p, h, x)
    x = hist[-1]
    out = []
    for _ in range(steps):
        h, x = _rnn_step(p, h, x)
        out.append(x)
    return np.array(out).reshape(steps, model.d)


def rnn_forecast_day(model: RNNModel, states, n_states: int | None = None) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    n = states.shape[0] if n_states is None else n_states
    return np.vstack([states[:1], rnn_predict(model, states[:1], n - 1)])
