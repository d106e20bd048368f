"""Seeded random model instances shared by experiments, the verification suite and tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lrdlab.attention import AttentionParams, Masking
from lrdlab.interaction import InteractionParams
from lrdlab.numerics import RandomStream, random_stable_matrix, sample_standard_normal, sample_uniform
from lrdlab.ssm import ContinuousSsm, FixedStep

EIG_RANGE = (-1.0, -0.05)


def _normal(stream: RandomStream, shape, scale: float = 1.0) -> np.ndarray:
    n = int(np.prod(shape))
    return scale * sample_standard_normal(stream, n).reshape(shape)


def _randint(stream: RandomStream, lo: int, hi: int) -> int:
    """Uniform integer in [lo, hi]."""
    return lo + int(sample_uniform(stream, 1)[0] * (hi - lo + 1))


@dataclass(frozen=True)
class ScalarInstance:
    """A scalar-input model with its inputs, initial state and query position."""

    params: InteractionParams  # g = 0 for plain SSM instances
    inputs: np.ndarray
    h0: np.ndarray
    lambda1: float
    t: int
    k: int

    @property
    def ssm(self) -> ContinuousSsm:
        return self.params.base


def draw_ssm(
    stream: RandomStream,
    H: int,
    eig_range=EIG_RANGE,
    delta: float = 1.0,
    scale: float | None = None,
) -> tuple[ContinuousSsm, float]:
    """Stable fixed-step SSM with B, C entries N(0, 1/H); returns it with its largest eigenvalue."""
    scale = 1.0 / np.sqrt(H) if scale is None else scale
    stable = random_stable_matrix(H, eig_range, stream.child(0))
    ssm = ContinuousSsm(
        A=stable.matrix,
        B=_normal(stream.child(1), (H,), scale),
        C=_normal(stream.child(5), (H,), scale),
        step_policy=FixedStep(delta),
    )
    return ssm, float(np.max(stable.eigenvalues))


def random_scalar_instance(
    stream: RandomStream,
    max_H: int = 8,
    max_T: int = 32,
    max_k: int = 16,
    interaction: bool = False,
    with_h0: bool = True,
    contractive: bool = False,
) -> ScalarInstance:
    """Random fixed-step instance with H, T, t, k drawn within the given limits.

    With ``contractive`` the coupling is rescaled so that
    ``||A_bar|| + ||g|| ||w|| E[x^2] < 1``; the trajectory then stays bounded in
    mean instead of growing geometrically.
    """
    H = _randint(stream.child(10), 1, max_H)
    T = _randint(stream.child(11), 2, max_T)
    k = _randint(stream.child(12), 0, min(max_k, T - 1))
    t = _randint(stream.child(13), 1, T - k)
    delta = 0.1 + 0.9 * float(sample_uniform(stream.child(14), 1)[0])
    ssm, lambda1 = draw_ssm(stream, H, delta=delta)
    scale = 1.0 / np.sqrt(H)
    g = _normal(stream.child(2), (H,), scale) if interaction else np.zeros(H)
    w = _normal(stream.child(3), (H,), scale)
    if interaction and contractive:
        room = 1.0 - float(np.exp(lambda1 * delta))  # A is symmetric, so ||A_bar|| = exp(lambda1 delta)
        target = 0.9 * room * float(sample_uniform(stream.child(15), 1)[0])
        norm = float(np.linalg.norm(g) * np.linalg.norm(w))
        if norm > 0:
            g = g * (target / norm)
    inputs = _normal(stream.child(4), (T,))
    h0 = _normal(stream.child(6), (H,)) if with_h0 else np.zeros(H)
    return ScalarInstance(InteractionParams(ssm, g, w), inputs, h0, lambda1, t, k)


@dataclass(frozen=True)
class AttentionInstance:
    params: AttentionParams
    inputs: np.ndarray
    masking: Masking
    t: int
    k: int


def random_attention_instance(stream: RandomStream, max_T: int = 8, max_d: int = 4) -> AttentionInstance:
    T = _randint(stream.child(10), 1, max_T)
    d = _randint(stream.child(11), 1, max_d)
    k = _randint(stream.child(12), 0, T - 1)
    t = _randint(stream.child(13), 1, T - k)
    masking = Masking.CAUSAL if _randint(stream.child(14), 0, 1) else Masking.FULL
    scale = 1.0 / np.sqrt(d)
    params = AttentionParams(
        _normal(stream.child(0), (d, d), scale),
        _normal(stream.child(1), (d, d), scale),
        _normal(stream.child(2), (d, d), scale),
    )
    return AttentionInstance(params, _normal(stream.child(3), (T, d)), masking, t, k)
