"""Single-head self-attention layer and the closed-form Jacobian dh_{t+k}/dx_t.

Weights are stored as ``weights[i, t]`` (0-based) = w(i+1, t+1): column ``t``
is the distribution over source positions feeding hidden state ``h_t``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from lrdlab.errors import InvalidArgumentError, NumericalError


class Masking(str, enum.Enum):
    FULL = "full"
    CAUSAL = "causal"


@dataclass(frozen=True)
class AttentionParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    beta: float | None = None  # None -> 1/sqrt(d)

    def __post_init__(self):
        mats = [np.asarray(m, dtype=float) for m in (self.w_q, self.w_k, self.w_v)]
        d = mats[0].shape[0] if mats[0].ndim == 2 else 0
        for name, m in zip(("w_q", "w_k", "w_v"), mats):
            if m.shape != (d, d) or d < 1:
                raise InvalidArgumentError(f"{name} must be a d x d matrix, got {m.shape}")
            if not np.all(np.isfinite(m)):
                raise InvalidArgumentError(f"{name} has non-finite entries")
        beta = 1.0 / np.sqrt(d) if self.beta is None else float(self.beta)
        if not beta >= 0:
            raise InvalidArgumentError(f"beta must be non-negative, got {beta}")
        for name, m in zip(("w_q", "w_k", "w_v"), mats):
            object.__setattr__(self, name, m)
        object.__setattr__(self, "beta", beta)

    @property
    def dim(self) -> int:
        return self.w_v.shape[0]

    @classmethod
    def random(cls, d: int, rng: np.random.Generator, beta: float | None = None) -> AttentionParams:
        scale = 1.0 / np.sqrt(d)
        return cls(*(scale * rng.standard_normal((d, d)) for _ in range(3)), beta=beta)


@dataclass(frozen=True)
class AttentionState:
    weights: np.ndarray  # (T, T), columns sum to one
    hidden: np.ndarray  # (T, d), row t-1 is h_t


def _as_inputs(inputs, d: int) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != d:
        raise InvalidArgumentError(f"inputs must be a (T, {d}) array with T >= 1, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("inputs must be finite")
    return x


def logits(inputs: np.ndarray, params: AttentionParams) -> np.ndarray:
    """``s[i, t] = beta * (W_Q x_i) . (W_K x_t)``."""
    return params.beta * (inputs @ params.w_q.T) @ (inputs @ params.w_k.T).T


def _admissible(T: int, masking: Masking) -> np.ndarray:
    if Masking(masking) is Masking.CAUSAL:
        return np.triu(np.ones((T, T), dtype=bool))  # i <= t
    return np.ones((T, T), dtype=bool)


def attention_weights(inputs: np.ndarray, params: AttentionParams, masking: Masking = Masking.FULL) -> np.ndarray:
    s = logits(inputs, params)
    if not np.all(np.isfinite(s)):
        i, t = np.argwhere(~np.isfinite(s))[0]
        raise NumericalError(f"non-finite attention logit at (i={i + 1}, t={t + 1})")
    mask = _admissible(s.shape[0], masking)
    s = np.where(mask, s, -np.inf)
    s = s - s.max(axis=0, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=0, keepdims=True)


def attention_forward(inputs, params: AttentionParams, masking: Masking = Masking.FULL) -> AttentionState:
    x = _as_inputs(inputs, params.dim)
    w = attention_weights(x, params, masking)
    values = x @ params.w_v.T
    return AttentionState(weights=w, hidden=w.T @ values)


def attention_lrd(inputs, params: AttentionParams, masking: Masking, t: int, k: int) -> np.ndarray:
    """Jacobian ``J[a, b] = d h_{t+k}[a] / d x_t[b]`` (``t`` is 1-based).

    The weight derivative is the softmax Jacobian applied to the logit
    derivatives: logit ``s(i, tau)`` depends on ``x_t`` through its query
    side when ``i == t`` and through its key side when ``tau == t``.
    """
    x = _as_inputs(inputs, params.dim)
    T = x.shape[0]
    if t < 1 or k < 0 or t + k > T:
        raise InvalidArgumentError(f"need 1 <= t and t + k <= T, got t={t}, k={k}, T={T}")
    tau = t + k - 1
    src = t - 1
    w = attention_weights(x, params, masking)[:, tau]  # zero outside the admissible set
    qk = params.beta * params.w_q.T @ params.w_k
    # ds[i] = d s(i, tau) / d x_t as a row vector
    ds = np.zeros((T, params.dim))
    ds[src] += qk @ x[tau]
    if tau == src:
        ds += x @ qk
    dw = w[:, None] * (ds - w @ ds)  # (T, d); rows outside the mask vanish with w
    values = x @ params.w_v.T
    return values.T @ dw + w[src] * params.w_v
