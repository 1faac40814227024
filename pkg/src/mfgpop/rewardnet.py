"""Convolutional reward network ``R_W(pi, P)`` with hand-written backpropagation.

Architecture (``d x d`` action matrix, ``d``-vector state):

    P -> pad 2 -> conv 5x5, 1 filter -> ReLU
      -> pad 1 -> conv 3x3, 2 filters -> ReLU -> flatten (2 d^2)
      -> concat pi -> dense 8 ReLU -> dropout -> dense 4 ReLU -> dropout -> dense 1 tanh

Every function works on a batch: ``pi`` is ``(B, d)`` and ``P`` is ``(B, d, d)``.
Parameters live in a plain ``dict`` of float arrays so that optimisers and
checkpoints can treat them uniformly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CHECKPOINT_VERSION = 1
DROPOUT_RATE = 0.6
PARAM_NAMES = ("k1", "b1", "k2", "b2", "W1", "c1", "W2", "c2", "W3", "c3")
# weights that carry the L1/L2 penalty (the two hidden fully-connected layers)
PENALISED = ("W1", "W2")


class ShapeError(ValueError):
    pass


def param_shapes(d: int) -> dict:
    return {
        "k1": (5, 5),
        "b1": (),
        "k2": (2, 3, 3),
        "b2": (2,),
        "W1": (2 * d * d + d, 8),
        "c1": (8,),
        "W2": (8, 4),
        "c2": (4,),
        "W3": (4, 1),
        "c3": (1,),
    }


def _fans(name: str, shape) -> tuple[int, int]:
    if name == "k1":
        return 25, 25
    if name == "k2":
        return 9, 18
    return shape[0], shape[1]


def xavier_init(rng: np.random.Generator, d: int) -> dict:
    """Xavier-normal weights (variance ``2 / (fan_in + fan_out)``), zero biases."""
    params = {}
    for name, shape in param_shapes(d).items():
        if name.startswith(("k", "W")):
            fan_in, fan_out = _fans(name, shape)
            params[name] = rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


def zeros_like(params: dict) -> dict:
    return {k: np.zeros_like(v, dtype=float) for k, v in params.items()}


def infer_dim(params: dict) -> int:
    n_in = params["W1"].shape[0]
    d = int(round((-1 + np.sqrt(1 + 8 * n_in)) / 4))
    if 2 * d * d + d != n_in:
        raise ShapeError(f"dense1 input size {n_in} is not 2d^2 + d")
    return d


def check_params(params: dict, d: int) -> None:
    shapes = param_shapes(d)
    for name, shape in shapes.items():
        if name not in params:
            raise ShapeError(f"missing parameter {name}")
        if np.shape(params[name]) != shape:
            raise ShapeError(f"{name} has shape {np.shape(params[name])}, expected {shape} for d={d}")


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    """``x`` is ``(B, d, d)``; returns zero-padded sliding windows ``(B, d, d, k, k)``."""
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    return sliding_window_view(xp, (k, k), axis=(1, 2))


def _correlate_back(g: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the input of a same-padded correlation: ``(B, d, d)``."""
    k = kernel.shape[-1]
    return np.einsum("bijuv,uv->bij", _windows(g, k), kernel[::-1, ::-1])


@dataclass
class Cache:
    pi: np.ndarray
    P: np.ndarray
    win1: np.ndarray
    a1: np.ndarray
    win2: np.ndarray
    a2: np.ndarray
    x: np.ndarray
    h1: np.ndarray
    h1d: np.ndarray
    h2: np.ndarray
    h2d: np.ndarray
    y: np.ndarray
    mask1: np.ndarray | None = None
    mask2: np.ndarray | None = None


def _as_batch(pi, P, d_expected: int | None = None):
    pi = np.asarray(pi, dtype=float)
    P = np.asarray(P, dtype=float)
    if pi.ndim == 1:
        pi = pi[None]
    if P.ndim == 2:
        P = P[None]
    if P.ndim != 3 or P.shape[1] != P.shape[2]:
        raise ShapeError(f"P must be (B, d, d), got {P.shape}")
    if pi.shape != P.shape[:2]:
        raise ShapeError(f"pi shape {pi.shape} does not match P shape {P.shape}")
    if d_expected is not None and pi.shape[1] != d_expected:
        raise ShapeError(f"network built for d={d_expected}, got d={pi.shape[1]}")
    return pi, P


def dropout_masks(rng: np.random.Generator, batch: int, rate: float = DROPOUT_RATE):
    """Inverted-dropout masks for the two hidden dense layers."""
    keep = 1.0 - rate
    m1 = (rng.random((batch, 8)) < keep) / keep
    m2 = (rng.random((batch, 4)) < keep) / keep
    return m1, m2


def forward_cache(pi, P, params: dict, masks=None) -> Cache:
    pi, P = _as_batch(pi, P, infer_dim(params))
    B, d = pi.shape
    win1 = _windows(P, 5)
    a1 = np.maximum(np.einsum("bijuv,uv->bij", win1, params["k1"]) + params["b1"], 0.0)
    win2 = _windows(a1, 3)
    z2 = np.einsum("bijuv,fuv->bfij", win2, params["k2"]) + params["b2"][None, :, None, None]
    a2 = np.maximum(z2, 0.0)
    x = np.concatenate([a2.reshape(B, -1), pi], axis=1)
    h1 = np.maximum(x @ params["W1"] + params["c1"], 0.0)
    m1, m2 = masks if masks is not None else (None, None)
    h1d = h1 * m1 if m1 is not None else h1
    h2 = np.maximum(h1d @ params["W2"] + params["c2"], 0.0)
    h2d = h2 * m2 if m2 is not None else h2
    y = np.tanh(h2d @ params["W3"] + params["c3"])[:, 0]
    return Cache(pi, P, win1, a1, win2, a2, x, h1, h1d, h2, h2d, y, m1, m2)


def forward(pi, P, params: dict, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
    """Reward of each pair in the batch, in ``(-1, 1)``.

    In train mode a fresh dropout mask is drawn from ``rng``; eval mode is deterministic.
    """
    masks = None
    if train:
        if rng is None:
            raise ValueError("train mode needs an rng for the dropout masks")
        masks = dropout_masks(rng, np.atleast_2d(pi).shape[0])
    return forward_cache(pi, P, params, masks).y


def reward_scalar(pi, P, params: dict) -> float:
    return float(forward(pi, P, params)[0])


def backward(cache: Cache, params: dict, upstream) -> dict:
    """Gradient of ``sum_b upstream[b] * y[b]`` with respect to every parameter."""
    up = np.broadcast_to(np.asarray(upstream, dtype=float), cache.y.shape)
    B = cache.y.shape[0]
    d = cache.pi.shape[1]
    grads = {}
    gz3 = (up * (1.0 - cache.y**2))[:, None]  # (B, 1)
    grads["W3"] = cache.h2d.T @ gz3
    grads["c3"] = gz3.sum(axis=0)
    gh2 = gz3 @ params["W3"].T
    if cache.mask2 is not None:
        gh2 = gh2 * cache.mask2
    gz2 = gh2 * (cache.h2 > 0)
    grads["W2"] = cache.h1d.T @ gz2
    grads["c2"] = gz2.sum(axis=0)
    gh1 = gz2 @ params["W2"].T
    if cache.mask1 is not None:
        gh1 = gh1 * cache.mask1
    gz1 = gh1 * (cache.h1 > 0)
    grads["W1"] = cache.x.T @ gz1
    grads["c1"] = gz1.sum(axis=0)
    gx = gz1 @ params["W1"].T
    ga2 = gx[:, : 2 * d * d].reshape(B, 2, d, d)
    gz_conv2 = ga2 * (cache.a2 > 0)
    grads["k2"] = np.einsum("bfij,bijuv->fuv", gz_conv2, cache.win2)
    grads["b2"] = gz_conv2.sum(axis=(0, 2, 3))
    ga1 = sum(_correlate_back(gz_conv2[:, f], params["k2"][f]) for f in range(2))
    gz_conv1 = ga1 * (cache.a1 > 0)
    grads["k1"] = np.einsum("bij,bijuv->uv", gz_conv1, cache.win1)
    grads["b1"] = np.array(gz_conv1.sum())
    return grads


def regularized_loss_terms(params: dict, l1: float, l2: float, names=PENALISED):
    """``sum l1 |w| + l2 w^2`` over the penalised weights and its (sub)gradient."""
    value = 0.0
    grads = zeros_like(params)
    for name in names:
        w = params[name]
        value += l1 * float(np.abs(w).sum()) + l2 * float((w * w).sum())
        grads[name] = l1 * np.sign(w) + 2.0 * l2 * w
    return value, grads


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict, **kw) -> "AdamState":
        return cls(zeros_like(params), zeros_like(params), **kw)


def adam_update(params: dict, grads: dict, state: AdamState, lr: float = 1e-4) -> dict:
    """One Adam descent step; returns new parameters and advances ``state`` in place."""
    state.step += 1
    t = state.step
    out = {}
    for name, w in params.items():
        g = grads[name]
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        mhat = state.m[name] / (1.0 - state.beta1**t)
        vhat = state.v[name] / (1.0 - state.beta2**t)
        out[name] = w - lr * mhat / (np.sqrt(vhat) + state.eps)
    return out


def trajectory_reward(traj, params: dict) -> float:
    """Sum of ``R_W`` over the state-action pairs of one trajectory."""
    if traj.actions.shape[0] == 0:
        return 0.0
    return float(forward(traj.states[:-1], traj.actions, params).sum())


def save_params(params: dict, path) -> None:
    """Structured-text checkpoint: a version, shapes and exact float reprs per tensor."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "tensors": {
            k: {"shape": list(np.shape(v)), "data": np.asarray(v, dtype=float).ravel().tolist()}
            for k, v in params.items()
        },
    }
    Path(path).write_text(json.dumps(payload))


def load_params(path) -> dict:
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ShapeError(f"unsupported checkpoint version {payload.get('version')!r}")
    params = {}
    for k, t in payload["tensors"].items():
        params[k] = np.array(t["data"], dtype=float).reshape(t["shape"])
    check_params(params, infer_dim(params))
    return params
