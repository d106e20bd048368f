"""State-space recurrence with an input-dependent rank-one interaction term.

    h_t = (A_bar_t + x_t^2 g w^T) h_{t-1} + B_bar_t x_t

With ``g = 0`` every operation here reduces to its :mod:`lrdlab.ssm` counterpart.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from lrdlab.errors import InvalidArgumentError, NumericalError
from lrdlab.numerics import RandomStream, sample_standard_normal
from lrdlab.ssm import (
    ContinuousSsm,
    HiddenTrajectory,
    _as_h0,
    _as_inputs,
    _check_state,
    discretize_sequence,
    unrolled_states,
)


@dataclass(frozen=True)
class InteractionParams:
    base: ContinuousSsm
    g: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        H = self.base.dim
        g = np.asarray(self.g, dtype=float).reshape(-1)
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if g.shape != (H,) or w.shape != (H,):
            raise InvalidArgumentError(f"g and w must have length {H}")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(w))):
            raise InvalidArgumentError("g and w must be finite")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def coupling(self) -> np.ndarray:
        """The rank-one matrix ``g w^T``."""
        return np.outer(self.g, self.w)


def interaction_transition(a_bar: np.ndarray, x: float, params: InteractionParams) -> np.ndarray:
    return a_bar + (x * x) * params.coupling


def _transitions(params: InteractionParams, x: np.ndarray):
    steps = discretize_sequence(params.base, x)
    coupling = params.coupling
    mats = [s.a_bar + (xt * xt) * coupling for s, xt in zip(steps, x)]
    return steps, mats


def interaction_scan(params: InteractionParams, inputs: Sequence[float], h0=None) -> HiddenTrajectory:
    x = _as_inputs(inputs)
    h0 = _as_h0(h0, params.dim)
    steps = discretize_sequence(params.base, x)
    h = h0
    states = np.empty((len(x), params.dim))
    for t, (step, xt) in enumerate(zip(steps, x), start=1):
        h = interaction_transition(step.a_bar, xt, params) @ h + step.b_bar * xt
        _check_state(h, t)
        states[t - 1] = h
    return HiddenTrajectory(states=states, outputs=states @ params.base.C, initial=h0)


def interaction_unroll(params: InteractionParams, inputs: Sequence[float], h0=None) -> HiddenTrajectory:
    """Hidden states from the explicit product-sum (unrolled) expansion."""
    x = _as_inputs(inputs)
    h0 = _as_h0(h0, params.dim)
    steps, mats = _transitions(params, x)
    states = unrolled_states(mats, [s.b_bar * xt for s, xt in zip(steps, x)], h0)
    return HiddenTrajectory(states=states, outputs=states @ params.base.C, initial=h0)


# -- eigen-aligned special case ----------------------------------------------


@dataclass(frozen=True)
class EigenAlignedConfig:
    """``A_bar = P diag(eigenvalues) P^T`` with the interaction on the last channel.

    The transition at step t is ``P diag(l_1, ..., l_{H-1}, l_H + gamma x_t^2) P^T``.
    """

    eigenvalues: np.ndarray
    gamma: float
    basis: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).reshape(-1)
        P = np.asarray(self.basis, dtype=float)
        H = lam.shape[0]
        if H < 1 or P.shape != (H, H):
            raise InvalidArgumentError(f"basis must be {H}x{H}")
        if self.gamma < 0:
            raise InvalidArgumentError(f"gamma must be non-negative, got {self.gamma}")
        if not np.allclose(P.T @ P, np.eye(H), atol=1e-10, rtol=0):
            raise InvalidArgumentError("basis is not orthogonal")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "basis", P)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def a_bar(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.T

    def interaction_vectors(self, g_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """``(g, w)`` along the last eigenvector with ``g . w`` scale product equal to gamma."""
        e = self.basis[:, -1]
        if g_scale == 0:
            raise InvalidArgumentError("g_scale must be non-zero")
        return g_scale * e, (self.gamma / g_scale) * e

    def to_interaction_params(self, b_bar, g_scale: float = 1.0) -> InteractionParams:
        """General-path parameters with the same discrete transitions (unit fixed step).

        Needs strictly positive eigenvalues so that ``A = log(A_bar)`` exists;
        ``B`` is chosen so that ZOH yields ``b_bar``.
        """
        if np.any(self.eigenvalues <= 0):
            raise InvalidArgumentError("continuous generator requires strictly positive eigenvalues")
        P = self.basis
        mu = np.log(self.eigenvalues)
        A = (P * mu) @ P.T
        # ZOH with unit step maps B to P diag(phi(mu)) P^T B with phi(m) = (e^m - 1)/m
        phi = np.where(np.abs(mu) > 1e-12, np.expm1(mu) / np.where(mu == 0, 1.0, mu), 1.0)
        B = P @ ((P.T @ np.asarray(b_bar, dtype=float)) / phi)
        g, w = self.interaction_vectors(g_scale)
        return InteractionParams(base=ContinuousSsm(A=A, B=B, C=np.zeros(self.dim)), g=g, w=w)


def eigen_aligned_scan(config: EigenAlignedConfig, b_bar, inputs: Sequence[float], h0=None) -> HiddenTrajectory:
    """Hidden states computed channel-wise in the eigenbasis.

    Channel ``j < H`` carries powers ``l_j^(t-i)``; channel ``H`` carries the
    running products ``prod_{i<m<=t} (l_H + gamma x_m^2)``. The config has
    no output map, so ``outputs`` is all zeros.
    """
    x = _as_inputs(inputs)
    H = config.dim
    h0 = _as_h0(h0, H)
    b_bar = np.asarray(b_bar, dtype=float).reshape(-1)
    if b_bar.shape != (H,):
        raise InvalidArgumentError(f"b_bar must have length {H}")
    P = config.basis
    lam = config.eigenvalues
    z0 = P.T @ h0
    zb = P.T @ b_bar
    T = len(x)
    last = lam[-1] + config.gamma * x * x  # (T,)
    states = np.empty((T, H))
    for t in range(1, T + 1):
        gaps = t - np.arange(0, t + 1)  # t - i for i = 0..t; i = 0 is the h0 term
        factors = np.empty((H, t + 1))
        factors[:-1] = lam[:-1, None] ** gaps[None, :]
        # suffix products of last[i..t-1] (0-based), i.e. prod over m = i+1..t
        tail = np.ones(t + 1)
        tail[:t] = np.cumprod(last[:t][::-1])[::-1]
        factors[-1] = tail
        drive = np.empty((H, t + 1))
        drive[:, 0] = z0
        drive[:, 1:] = zb[:, None] * x[None, :t]
        z = np.sum(factors * drive, axis=1)
        if not np.all(np.isfinite(z)):
            raise NumericalError(f"hidden state became non-finite at step t={t}")
        states[t - 1] = P @ z
    return HiddenTrajectory(states=states, outputs=np.zeros(T), initial=h0)


def stability_sweep(
    config: EigenAlignedConfig,
    b_bar,
    horizon: int,
    n_seeds: int,
    stream: RandomStream,
) -> np.ndarray:
    """Run the recurrence for ``n_seeds`` standard-normal input sequences at once.

    Each sequence uses substream ``stream.child(s)``. Returns a boolean array
    flagging the sequences whose state stayed finite through ``horizon`` steps.
    """
    H = config.dim
    A_bar = config.a_bar()
    e = config.basis[:, -1]
    coupling = config.gamma * np.outer(e, e)
    b_bar = np.asarray(b_bar, dtype=float)
    xs = np.stack([sample_standard_normal(stream.child(s), horizon) for s in range(n_seeds)])
    h = np.zeros((n_seeds, H))
    finite = np.ones(n_seeds, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(horizon):
            xt = xs[:, t]
            h = h @ A_bar.T + (xt * xt)[:, None] * (h @ coupling.T) + xt[:, None] * b_bar[None, :]
            finite &= np.all(np.isfinite(h), axis=1)
    return finite
